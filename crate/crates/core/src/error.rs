use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter lies outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A scenario, run plan or ROI definition is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Linear-algebra breakdown inside the filter recursion.
    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    /// Every diagonal entry of the standardization normalizer vanished.
    #[error("degenerate standardization at step {step}: normalizer diagonal is identically zero")]
    DegenerateStep { step: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("SNR undefined: clean signal has zero power")]
    UndefinedSnr,

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    Checksum { stored: String, computed: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a step index to a numerical error produced without one.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numerical { reason, .. } => Error::Numerical { step, reason },
            Error::DegenerateStep { .. } => Error::DegenerateStep { step },
            other => other,
        }
    }

    /// True for failures of the filter arithmetic, as opposed to I/O or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::DegenerateStep { .. })
    }
}
