use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("agent {agent} out of range for a graph with {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },

    #[error("value {value} at position {position} is outside [0, {radix})")]
    ValueOutOfRange {
        position: usize,
        value: usize,
        radix: usize,
    },

    #[error("flat index {index} is outside [0, {size})")]
    IndexOutOfRange { index: u128, size: u128 },

    #[error("mixed-radix space is too large to index with 128 bits")]
    IndexOverflow,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid distribution for agent {agent}: {reason}")]
    InvalidDistribution { agent: usize, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("size guard exceeded: {what} needs {required} entries, limit is {limit}")]
    SizeGuard {
        what: &'static str,
        required: u128,
        limit: u128,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cell kappa={kappa} seed={seed}: {source}")]
    Cell {
        kappa: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user configuration rather than execution.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Cell { source, .. } => source.is_config_error(),
            other => matches!(
                other,
                Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) | Error::InvalidGraph(_)
            ),
        }
    }
}
