use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid group spec: {0}")]
    InvalidSpec(String),

    /// An element or measure was handed to a group it does not belong to.
    #[error("element does not belong to group {group}")]
    SpecMismatch { group: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    /// A resource cap (set size, atom count, search depth) was hit.
    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("index {index} is beyond the order {order} of a finite group")]
    OutOfRange { index: u64, order: u64 },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the root cause is a budget/cap failure.
    pub fn is_budget(&self) -> bool {
        match self {
            Error::Budget(_) => true,
            Error::Stage { source, .. } => source.is_budget(),
            _ => false,
        }
    }

    pub(crate) fn at_stage(self, stage: usize) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
