//! Exact Gaussian-process regression on a scalar time axis.
//!
//! Hyperparameters are optimised in log space; the gradient vector lists the
//! kernel hyperparameters in pre-order followed by the log noise variance.

mod kernel;
mod linalg;
mod model;
mod optimize;

pub use kernel::{HyperBounds, HyperKind, KernelSpec};
pub use linalg::Cholesky;
pub use model::{GpModel, GpRecord, Prediction};
pub use optimize::{fit, fit_detailed, FitOutcome, OptimizerConfig, StartOutcome};
