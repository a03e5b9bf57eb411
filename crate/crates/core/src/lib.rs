//! Simulation and analysis of hormonal menstrual-cycle data.
//!
//! * [`model`]: the 13-state delay-differential model of pituitary and ovarian dynamics.
//! * [`dde`]: adaptive Runge-Kutta integrator for constant-delay systems with dense output.
//! * [`gp`]: exact Gaussian-process regression with composable kernels.
//! * [`phase`]: peak/valley detection, cycle segmentation and accuracy scoring.
//! * [`experiment`]: downsampling, noise and the grid sweeps built from the pieces above.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dde;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod model;
pub mod phase;

pub use dde::{SolverConfig, Trajectory};
pub use error::{Error, Result};
pub use gp::{GpModel, KernelSpec};
pub use model::{nominal_initial_state, nominal_parameters, ParameterSet, StateVector};
pub use phase::{EventKind, EventSet, Hormone};
