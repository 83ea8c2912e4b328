use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: duplicate sample for vehicle {vehicle_id} at t={time_s}")]
    DuplicateSample {
        line: u64,
        vehicle_id: i64,
        time_s: f64,
    },

    #[error("line {line}: time goes backwards for vehicle {vehicle_id} (t={time_s})")]
    NonMonotoneTime {
        line: u64,
        vehicle_id: i64,
        time_s: f64,
    },

    #[error("vehicle {vehicle_id}: irregular sampling at t={time_s} (expected step {dt_s} s)")]
    IrregularSampling {
        vehicle_id: i64,
        time_s: f64,
        dt_s: f64,
    },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("non-positive spacing {0} m")]
    NonPositiveSpacing(f64),

    #[error("history too short: need {needed} steps, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("policy returned non-finite acceleration at step {step}")]
    NonFiniteAccel { step: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("environment already terminated")]
    TerminalEnv,

    #[error("replay buffer holds {len} transitions, cannot sample {requested}")]
    Underfilled { len: usize, requested: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
