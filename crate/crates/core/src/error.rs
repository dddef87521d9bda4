use thiserror::Error;

/// Errors produced by the backflow numerics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackflowError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// A quadrature did not reach its requested accuracy.
    #[error("accuracy failure in {context}: estimated error {estimate:e} exceeds {limit:e}{}", at_time(.time))]
    Accuracy {
        context: String,
        estimate: f64,
        limit: f64,
        time: Option<f64>,
    },

    #[error("eigensolver failure after {iterations} iterations (achieved residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),
}

fn at_time(t: &Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, BackflowError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BackflowError::InvalidArgument(msg.into()))
}
