use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration violates a documented constraint.
    #[error("validation: {0}")]
    Validation(String),

    /// An iterative procedure did not converge within its budget.
    #[error("convergence: {what} did not converge after {steps} steps (last value {last})")]
    Convergence {
        what: &'static str,
        steps: usize,
        last: f64,
    },

    /// A numerical procedure failed (step-size underflow, non-finite values).
    #[error("numerical: {0}")]
    Numerical(String),

    /// A requested quantity lies outside the scanned range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Shorthand for returning a validation error.
macro_rules! invalid {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Validation(format!($($arg)*)))
    };
}
pub(crate) use invalid;
