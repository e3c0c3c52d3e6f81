//! Benchmark harness for the streaming solver.
//!
//! Functionality is split by concern: [`config`] parses and validates the
//! flat experiment configuration, [`experiment`] drives the methods and
//! collects traces, [`mc_cov`] estimates the true error covariance by
//! shared-feature Monte-Carlo, [`grid`] sweeps SGD schedules, [`featurize`]
//! caches engineered features, and [`output`] writes the plot-ready files.
//!
//! The binary in `main.rs` is a thin command-line wrapper over these
//! modules; everything it does is available as a library call.

pub mod config;
pub mod experiment;
pub mod featurize;
pub mod grid;
pub mod mc_cov;
pub mod output;

pub use config::{RawConfig, ResolvedConfig};
pub use experiment::{run_and_emit, run_experiment, ExperimentOutput};
