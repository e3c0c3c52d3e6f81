//! Streaming solver for linear regression that tracks both a parameter
//! estimate and a covariance-style scaling matrix, updating each from one
//! observation at a time in constant memory.
//!
//! The crate is organized around the solver state machine in [`solver`]:
//! every observation triggers a rank-one update of the estimate and the
//! scaling matrix, and the trace of the scaling matrix doubles as a
//! data-driven stopping signal. The remaining modules supply what a
//! benchmark of that solver needs: noise-scale tuning policies
//! ([`tuning`]), model-side utilities such as wavelet featurization and a
//! Gauss-Newton driver for logistic regression ([`models`]), SGD and batch
//! least-squares baselines ([`baselines`]), synthetic and CSV data sources
//! ([`data`]), and run traces ([`trace`]).

pub mod baselines;
pub mod data;
pub mod error;
pub mod linalg;
pub mod models;
pub mod solver;
pub mod trace;
pub mod tuning;

pub use error::{KsgdError, Result};
pub use nalgebra::{DMatrix, DVector};
pub use solver::{init_state, ksgd_step, KsgdState, Observation, StepDiagnostics};
