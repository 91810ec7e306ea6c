use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("bad cell at line {line}, column `{column}`: {value:?}")]
    BadCell {
        line: usize,
        column: String,
        value: String,
    },

    #[error("bad header: {0}")]
    BadHeader(String),

    #[error("duplicate event ({trace}, {index})")]
    DuplicateEvent { trace: String, index: i64 },

    #[error("malformed XES: {0}")]
    Xes(String),

    #[error("no traces")]
    NoTraces,

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("kind mismatch for `{variable}`: {reason}")]
    KindMismatch { variable: String, reason: String },

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("rule would close a dependency cycle: {0}")]
    Cycle(String),

    #[error("invalid log: {0}")]
    InvalidLog(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value not in allowed set")]
    ValueNotAllowed,

    #[error("zero total frequency over allowed values")]
    ZeroFrequency,

    #[error("stream underrun: {0}")]
    StreamUnderrun(&'static str),

    #[error("stream overrun: {0}")]
    StreamOverrun(&'static str),

    #[error("stream mismatch: {0}")]
    StreamMismatch(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
