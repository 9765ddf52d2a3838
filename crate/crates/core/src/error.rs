use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("payload length mismatch: {left} vs {right} bytes")]
    PayloadLength { left: usize, right: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("no connected graph after {attempts} attempts (n={n}, L={side_length})")]
    ConnectivityExhausted {
        attempts: u32,
        n: usize,
        side_length: f64,
    },

    #[error("simulation exceeded the round cap of {cap} rounds ({pending} packets still live)")]
    RoundCap { cap: u64, pending: usize },

    #[error("unknown source id {0}")]
    UnknownSource(usize),

    #[error("source {source_id} has {visits} recorded visits, at least 2 are required")]
    InsufficientVisits { source_id: usize, visits: usize },

    #[error("visit log has no source with at least 2 visits")]
    NoQualifyingSource,

    #[error("config: {0}")]
    Config(String),

    #[error("malformed graph dump at line {line}: {reason}")]
    Dump { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
