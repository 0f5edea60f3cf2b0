use thiserror::Error;

use crate::skm::parse::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    /// Total hazard exceeds the uniformization rate; the step must shrink.
    #[error("step too coarse: total hazard {total_hazard} exceeds uniformization rate {gamma}")]
    StepTooCoarse { total_hazard: f64, gamma: f64 },
    #[error("location {0} has no outgoing rate")]
    AbsorbingLocation(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("no positive labels")]
    NoPositives,
    #[error("truth series is constant")]
    ConstantTruth,
    #[error("no consecutive-day report pairs")]
    NoConsecutivePairs,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
