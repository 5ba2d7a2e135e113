use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LipError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// delta = 0 and the closed ball B[x, epsilon] misses image(phi).
    #[error("infeasible instance: delta=0 and ball misses image (residual {residual} > epsilon {epsilon})")]
    Infeasible { residual: f64, epsilon: f64 },

    /// The iteration budget ran out before the bracket closed. The bounds
    /// are still valid: `dual_lower <= C^(1/p) <= primal_upper`.
    #[error("iteration budget of {iterations} exhausted with bracket [{dual_lower}, {primal_upper}]")]
    BudgetExceeded {
        iterations: usize,
        primal_upper: f64,
        dual_lower: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LipError {
    fn from(e: std::io::Error) -> Self {
        LipError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LipError {
    fn from(e: serde_json::Error) -> Self {
        LipError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LipError>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(LipError::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}
