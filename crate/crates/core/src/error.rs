use thiserror::Error;

/// Errors raised by the inversion toolkit.
#[derive(Debug, Error)]
pub enum FwiError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular system in {context}: pivot {pivot} has magnitude {magnitude:e}")]
    Singular {
        context: String,
        pivot: usize,
        magnitude: f64,
    },

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("iteration {iteration} of batch {batch}: {source}")]
    Iteration {
        batch: usize,
        iteration: usize,
        #[source]
        source: Box<FwiError>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FwiError {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            FwiError::Singular { .. } | FwiError::NonFinite(_) | FwiError::Degenerate(_) => true,
            FwiError::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = FwiError> = std::result::Result<T, E>;
