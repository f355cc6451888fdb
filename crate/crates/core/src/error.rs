use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid environment: {0}")]
    InvalidEnv(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("action index {action} out of range for {actions} actions")]
    ActionOutOfRange { action: usize, actions: usize },

    #[error("step {step} out of range 1..={horizon}")]
    StepOutOfRange { step: usize, horizon: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular regularized Gram matrix{}", step.map(|t| format!(" at step {t}")).unwrap_or_default())]
    Singular { step: Option<usize> },

    #[error("LOOCV undefined: every hat-matrix diagonal equals 1")]
    LoocvUndefined,

    #[error("no LOOCV candidate produced a defined score at step {step}")]
    NoValidCandidate { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attaches a backward-pass step to a singularity error.
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::Singular { .. } => Error::Singular { step: Some(step) },
            other => other,
        }
    }
}
