use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate fusion: every class probability product is zero")]
    DegenerateFusion,

    #[error("degenerate embedding: vector has zero norm")]
    DegenerateEmbedding,

    #[error("motion speed is undefined for a tracklet with {0} boxes")]
    UndefinedSpeed(usize),

    #[error("metric is undefined: {0}")]
    UndefinedMetric(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad user input (files, flags, config) rather than
    /// a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::Format { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
