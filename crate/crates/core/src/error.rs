use thiserror::Error;

use crate::coeffs::AlgorithmKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{algorithm} needs at least {required} correspondences, got {got}")]
    InsufficientPoints {
        algorithm: AlgorithmKind,
        required: usize,
        got: usize,
    },

    #[error("{algorithm} requires the {channel} measurement in both frames")]
    MissingInertial {
        algorithm: AlgorithmKind,
        channel: &'static str,
    },

    #[error("degenerate gravity vector (norm {0:e})")]
    DegenerateGravity(f64),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no consensus: {0}")]
    NoConsensus(String),

    #[error("refinement diverged: energy rose from {before:e} to {after:e}")]
    EnergyIncrease { before: f64, after: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            Error::Parse { .. } | Error::Csv(_) => 2,
            Error::InsufficientPoints { .. } => 3,
            Error::Degenerate(_) | Error::DegenerateGravity(_) | Error::NoConsensus(_) => 4,
            Error::MissingInertial { .. } => 5,
            Error::EnergyIncrease { .. } => 6,
            Error::NonFinite(_) | Error::InvalidArgument(_) => 7,
        }
    }
}
