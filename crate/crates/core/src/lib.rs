//! Dynamical standardized Kalman filtering for dynamic EEG source reconstruction.
//!
//! - [`statespace`]: kinematic transition, process-noise and observation matrices.
//! - [`filter`]: the standardized filter, its zero-order baseline and the RTS smoother.
//! - [`simulate`]: synthetic lead fields, pulse sources and SNR-calibrated recordings.
//! - [`metrics`]: ROI tracks, ensembles, normalized cross-correlation and track errors.
//! - [`io`]: lead-field, scenario, recording and results-container files.

pub mod error;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod simulate;
pub mod statespace;

pub use error::{Error, Result};
