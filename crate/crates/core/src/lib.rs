//! Plug-and-Play MAP estimation for imaging inverse problems.

pub mod denoiser;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod likelihood;
pub mod metrics;
pub mod solver;

pub use error::{PnpError, Result};
pub use grid::{ImageGrid, Kernel, LinearOperator, MaskSplit};
pub use likelihood::{GaussianLikelihood, HardConstraintLikelihood, Likelihood};
