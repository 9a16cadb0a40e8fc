use thiserror::Error;

/// Errors surfaced by the library. Each variant carries a stable machine-readable
/// code (see [`CoreError::code`]) used by the CLI's diagnostic stream.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for {len} agents")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("node attributes required when homophily coefficient is nonzero")]
    MissingNodeAttrs,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("separation detected: {0}")]
    Separation(String),

    #[error("did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("singular Hessian in sandwich variance")]
    SingularHessian,

    #[error("nonpositive standard error at coordinate {0}")]
    NonPositiveSe(usize),

    #[error("regressor support is not discrete: {0}")]
    NonDiscreteSupport(String),

    #[error("supermodularity violated: peer coefficient must be nonnegative, got {0}")]
    NotSupermodular(f64),

    #[error("unknown report format: {0}")]
    UnknownFormat(String),

    #[error("checkpoint does not match the requested configuration: {0}")]
    CheckpointMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CoreError {
    /// Stable short code for machine-readable diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            CoreError::InvalidArgument(_) => "E_INVALID_ARG",
            CoreError::DimensionMismatch(_) => "E_DIM_MISMATCH",
            CoreError::IndexOutOfRange { .. } => "E_INDEX",
            CoreError::NonPositiveBandwidth(_) => "E_BANDWIDTH",
            CoreError::MissingNodeAttrs => "E_MISSING_ATTRS",
            CoreError::RankDeficient => "E_RANK_DEFICIENT",
            CoreError::Separation(_) => "E_SEPARATION",
            CoreError::NonConvergence(_) => "E_NONCONVERGENCE",
            CoreError::SingularHessian => "E_SINGULAR_HESSIAN",
            CoreError::NonPositiveSe(_) => "E_BAD_SE",
            CoreError::NonDiscreteSupport(_) => "E_NON_DISCRETE",
            CoreError::NotSupermodular(_) => "E_SUPERMODULARITY",
            CoreError::UnknownFormat(_) => "E_FORMAT",
            CoreError::CheckpointMismatch(_) => "E_CHECKPOINT",
            CoreError::Io(_) => "E_IO",
            CoreError::Serde(_) => "E_SERDE",
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
