//! Experiment runner for the dynamical standardized Kalman filter: simulate recordings,
//! run method grids, and turn results into tables and figures.

mod app;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod grid;
pub mod method;
pub mod plot;
pub mod sweep;

pub use app::{main_with_args, DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV};
pub use error::{CliError, CliResult};
