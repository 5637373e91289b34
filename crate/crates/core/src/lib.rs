//! Uncertainty propagation for two-module coupled systems by standard and
//! reduced non-intrusive spectral projection.

pub mod basis;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod gpc;
pub mod linalg;
pub mod nisp;
pub mod problems;
pub mod reduction;

pub use error::{Error, Result};
