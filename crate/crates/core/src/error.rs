use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("color channel {channel} = {value} is outside [0, 1]")]
    InvalidColor { channel: &'static str, value: f64 },

    #[error("context colors {a} and {b} are only {distance:.3} apart (minimum {epsilon})")]
    PerceptibilityViolation {
        a: usize,
        b: usize,
        distance: f64,
        epsilon: f64,
    },

    #[error("no {condition} context accepted after {attempts} attempts")]
    SamplingBudgetExceeded { condition: String, attempts: u64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },

    #[error("index {index} out of range for table with {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("utterance is empty")]
    EmptyUtterance,

    #[error("utterance `{0}` is true of no referent")]
    VacuousUtterance(String),

    #[error("no utterance is true of referent {0}")]
    NoTrueUtterance(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
