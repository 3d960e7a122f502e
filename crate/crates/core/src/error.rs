// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module.

use std::io;

/// Errors raised by circuitscope.
///
/// Variants are grouped by the process exit code the CLI maps them to:
/// configuration problems (2), bad or missing data (3) and numeric failures (4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inconsistent settings: dimension mismatches, bad layer orderings, etc.
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs outside their valid range (token ids, layer indices).
    #[error("input error: {0}")]
    Input(String),

    /// Malformed, missing or conflicting data and files.
    #[error("data error: {0}")]
    Data(String),

    /// A statistic needs more samples than were supplied.
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: u64, got: u64 },

    /// Non-finite or degenerate numerics.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// SAE training produced a non-finite loss.
    #[error("training diverged at step {step} (loss = {loss})")]
    TrainingDiverged { step: usize, loss: f64 },

    /// Failure while tracing one source feature.
    #[error("trace of feature {feature} failed: {source}")]
    FeatureTrace {
        feature: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for this error (2 config, 3 data, 4 numeric).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Input(_) | Error::Data(_) | Error::InsufficientData { .. } | Error::Io(_) => 3,
            Error::Numeric(_) | Error::TrainingDiverged { .. } => 4,
            Error::FeatureTrace { source, .. } => source.exit_code(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
