use thiserror::Error;

/// Crate-wide error type.
///
/// The benchmark CLI maps these onto process exit codes: configuration
/// problems exit 2, data problems exit 3, invariant violations exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("weight does not belong to family {family}")]
    FamilyMismatch { family: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all coefficients are zero; index distribution is undefined")]
    AllZeroCoefficients,

    #[error("family {family} has no closed-form kernel")]
    KernelUnavailable { family: String },

    #[error("zero vector has no direction; angular kernel undefined")]
    ZeroVectorAngle,

    #[error("kernel matrix is degenerate after {attempts} attempts")]
    DegenerateKernel { attempts: usize },

    #[error("data stream exhausted after {emitted} pairs (needed {needed})")]
    StreamExhausted { emitted: usize, needed: usize },

    #[error("label {value} outside [-1, 1]")]
    LabelOutOfRange { value: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the benchmark CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 2,
            Error::StreamExhausted { .. } | Error::LabelOutOfRange { .. } => 3,
            Error::InvariantViolation(_) => 4,
            _ => 1,
        }
    }
}
