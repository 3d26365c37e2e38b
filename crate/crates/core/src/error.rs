use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not skew-symmetric (defect {defect:.3e})")]
    NotSkew { defect: f64 },

    #[error("matrix is not orthogonal (defect {defect:.3e}, tolerance {tolerance:.1e})")]
    NotOrthogonal { defect: f64, tolerance: f64 },

    #[error("polar retraction input has singular value {sigma:.3e} outside (0.5, 1.5)")]
    SingularInput { sigma: f64 },

    #[error("point {point:?} lies outside the domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("finite-difference stencil at {point:?} leaves the sampled region")]
    StencilOutOfRange { point: Vec<f64> },

    #[error("transport integration diverged at t = {t}")]
    IntegrationDiverged { t: f64 },

    #[error("gauge transform produced a non-skew connection (defect {defect:.3e})")]
    NonOrthogonalGauge { defect: f64 },

    #[error("weight exponent {alpha} outside the admissible band (-1, {upper})")]
    WeightOutOfRange { alpha: f64, upper: f64 },

    #[error("field does not vanish on its compact-support collar: {0}")]
    UnsupportedField(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
