use thiserror::Error;

#[derive(Debug, Error)]
pub enum IsacError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The sensing or power constraints cannot be met (bad mask, bad warm start, ...).
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IsacError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, IsacError::Infeasible(_))
    }
}

pub type Result<T> = std::result::Result<T, IsacError>;

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(IsacError::Dimension(what()))
    }
}
