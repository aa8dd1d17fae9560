pub mod expr;
pub mod fd;
