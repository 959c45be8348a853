use thiserror::Error;

/// Coarse error category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum HomError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid truncates the wavepacket: captured weight {captured:.6} < {required}")]
    Truncation { captured: f64, required: f64 },

    #[error("time grids differ")]
    GridMismatch,

    #[error("matrix shape {rows}x{cols} does not match grid with {n_bins} bins")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        n_bins: usize,
    },

    #[error("density matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error(
        "density matrix is not positive semidefinite (an eigenvalue lies below -{tolerance:.3e})"
    )]
    NotPositive { tolerance: f64 },

    #[error("density matrix has zero or negative trace")]
    ZeroTrace,

    #[error("density matrix is not normalized (trace {trace})")]
    Unnormalized { trace: f64 },

    #[error("mean photon number is zero")]
    ZeroMeanPhotonNumber,

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("photon budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("histogram: {0}")]
    Histogram(String),

    #[error("fit: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HomError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        HomError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            HomError::Io(_) => ErrorKind::Io,
            HomError::ZeroDenominator(_) | HomError::Fit(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, HomError>;
