//! Numerical kernels for Bergman kernels, Chern forms of Kodaira pullbacks
//! and random holomorphic sections on the model spaces CP^1 and CP^2.

pub mod bergman;
pub mod chern;
pub mod error;
pub mod forms;
pub mod grassmann;
pub mod jet;
pub mod model;
pub mod poly;
pub mod quadrature;
pub mod rng;
pub mod roots;
pub mod sections;
pub mod stats;
pub mod zeros;

pub use error::{LabError, Result};
pub use jet::C64;

#[cfg(test)]
#[path = "../tests/common/fd.rs"]
mod fd_oracle;
