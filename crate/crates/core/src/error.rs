use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("field geometry: {0}")]
    Field(String),

    #[error("no unharvested furrow remains")]
    FieldExhausted,

    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("distribution: {0}")]
    Distribution(String),

    #[error("insufficient data for regression: {0}")]
    Regression(String),

    #[error("instance size {n} exceeds exact-solver cap {cap}")]
    SizeCap { n: usize, cap: usize },

    #[error("illegal FSM transition: {agent} in {mode} on event {event}")]
    IllegalTransition {
        agent: String,
        mode: String,
        event: String,
    },

    #[error("simulation fault (seed {seed}): {reason}")]
    SimFault { seed: u64, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
