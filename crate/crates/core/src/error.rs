use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The Q table is not strictly decreasing where a threshold is requested.
    #[error("corrupted Q table at slot {t}: Q(t-1)/Q(t) = {ratio} <= 1")]
    CorruptTables { t: usize, ratio: f64 },

    /// A stopping region that is not a single threshold in energy.
    #[error("stopping region at slot {t} is not single-crossing in energy")]
    NotSingleCrossing { t: usize },

    #[error("slot {t} outside 1..={horizon}")]
    SlotOutOfRange { t: usize, horizon: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the `ehd` binary: 2 for bad input, 3 for a
    /// violated internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CorruptTables { .. } | Error::NotSingleCrossing { .. } => 3,
            _ => 2,
        }
    }
}
