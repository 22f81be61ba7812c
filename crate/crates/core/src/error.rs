use thiserror::Error;

/// Errors produced by the solvers, sensitivity drivers and front end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("division by a dual number with zero primal")]
    DualDivisionByZero,

    #[error("invalid time specification: {0}")]
    InvalidTimeSpec(String),

    #[error("invalid step size {0}: must be positive and finite")]
    InvalidStep(f64),

    #[error("invalid tolerance configuration: {0}")]
    InvalidTolerance(String),

    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },

    #[error("maximum number of steps ({0}) exceeded")]
    MaxStepsExceeded(usize),

    #[error("step size underflow: h = {h:e} at t = {t}")]
    StepUnderflow { t: f64, h: f64 },

    #[error("query time {t} outside interpolation interval [{a}, {b}]")]
    OutsideInterval { t: f64, a: f64, b: f64 },

    #[error("operation requires a prescribed vector of output time points, got a time span")]
    SpanModeUnsupported,

    #[error("model does not provide analytic Jacobians")]
    NoAnalyticJacobian,

    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),

    #[error("scenario parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
