use std::fmt::Display;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad arguments, bad config or input that does not fit the request.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] icboost_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    pub fn usage(msg: impl Display) -> Self {
        Self::Usage(msg.to_string())
    }

    pub fn runtime(msg: impl Display) -> Self {
        Self::Runtime(msg.to_string())
    }

    /// 2 for usage and config errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
