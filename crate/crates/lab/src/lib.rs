//! Runner, artifact writer and acceptance battery for the kodlab experiments.

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;
