use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by all modules in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid transition model: {0}")]
    InvalidModel(String),

    #[error("observed category {index} has zero probability under every admissible row")]
    ImpossibleObservation { index: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("no supported action at state {state}")]
    EmptySupport { state: usize },

    #[error("no feasible policy: {0}")]
    NoFeasiblePolicy(String),

    #[error(
        "behavior policy has zero mass on action {action} at observation {obs} \
         (trajectory {trajectory}, step {step})"
    )]
    UndefinedWeight {
        trajectory: usize,
        step: usize,
        obs: usize,
        action: usize,
    },

    #[error("missing input for {method}: {what}")]
    MissingInput { method: String, what: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
