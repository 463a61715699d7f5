use thiserror::Error;

/// Errors raised by the assessment engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sun is below the horizon (altitude {altitude_deg:.3} deg)")]
    SunBelowHorizon { altitude_deg: f64 },

    #[error("time step {0} min is outside the permitted range [1, 5]")]
    InvalidTimeStep(f64),

    #[error("invalid value for `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("point at or above the roof cannot be shaded by this building")]
    AboveRoof,

    #[error("non-finite surrogate input")]
    NonFiniteInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
