//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported subcarrier spacing {0} Hz (expected 15000 or 30000)")]
    UnsupportedScs(u32),
    #[error("{n_rb} resource blocks cannot host a {min}-RB SSB")]
    TooFewResourceBlocks { n_rb: usize, min: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("reference signal has zero power")]
    ZeroReferencePower,
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: String },
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("carrier frequency must be positive, got {0} Hz")]
    NonPositiveCarrier(f64),
    #[error("noise power must be positive")]
    NonPositiveNoise,
    #[error("SJNR threshold must be positive")]
    NonPositiveThreshold,
    #[error("smart jammer requires an SSB burst schedule")]
    MissingBurstSchedule,
    #[error("UE at ({0}, {1}) coincides with a jammer")]
    CoincidentJammer(f64, f64),
    #[error("invalid fading profile: {0}")]
    InvalidProfile(String),
    #[error("unknown MCS index {0}")]
    UnknownMcs(usize),
    #[error("MCS table is empty")]
    EmptyMcsTable,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
