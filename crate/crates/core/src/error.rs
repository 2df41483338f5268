use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("CFL violation: courant number {courant:.3} with dt = {dt:e}; reduce dt")]
    Cfl { courant: f64, dt: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("noise path too short: need {needed} steps, path has {available}")]
    PathTooShort { needed: usize, available: usize },

    #[error("problem size {size} exceeds the exact-transport limit of {limit}; use coupled_upper_bound instead")]
    TooLarge { size: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input) map to a distinct CLI exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Cfl { .. } | Error::NonFinite(_) | Error::Singular(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
