use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index ({row}, {col}) out of range for a {rows}x{cols} store")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("empty-row sample: row {0} has zero weight")]
    EmptyRow(usize),

    #[error("store is empty")]
    EmptyStore,

    #[error("zero vector")]
    ZeroVector,

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("cold-start user {0}: row is empty in the stored matrix")]
    ColdStart(usize),

    #[error("projection empty: no success after {iterations} iterations (success probability {success_probability})")]
    ProjectionEmpty {
        iterations: usize,
        success_probability: f64,
    },

    #[error("bound vacuous: {0}")]
    BoundVacuous(String),

    #[error("register of {requested} amplitudes exceeds the simulator cap of {cap}")]
    RegisterTooLarge { requested: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
