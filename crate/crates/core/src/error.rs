use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("matrix is singular to working precision (min eigenvalue estimate {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    #[error("design restricted to the tangent space is not injective (min singular value {min_singular:e})")]
    NotInjective { min_singular: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("objective appears unbounded below (objective {objective:e}, iterate norm {norm:e})")]
    Unbounded { objective: f64, norm: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("support/rank detection failed: {0}")]
    Detection(String),

    #[error("enumeration needs {needed} patterns, budget is {limit}")]
    BudgetExceeded { needed: u128, limit: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite(context: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}
