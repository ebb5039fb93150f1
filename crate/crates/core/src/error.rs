use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("exponent p = {0} is not supported (p must be >= 2)")]
    UnsupportedExponent(f64),

    #[error("coefficient field is not uniformly elliptic (margin {margin:.6e})")]
    NotElliptic { margin: f64 },

    #[error("Rayleigh quotient undefined for a zero field")]
    ZeroField,

    #[error("field is not admissible: {0}")]
    Admissibility(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear solver breakdown: {0}")]
    Solver(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("failed to read coefficient table: {0}")]
    Table(String),

    #[error("output failed: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 2.0 {
        Ok(())
    } else {
        Err(Error::UnsupportedExponent(p))
    }
}
