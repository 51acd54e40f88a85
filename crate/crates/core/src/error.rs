use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{function}: argument {x} is a pole (nonpositive integer)")]
    PoleArgument { function: &'static str, x: f64 },

    #[error("{what}: series did not converge within {terms} terms")]
    NonConvergence { what: &'static str, terms: usize },

    #[error("invalid parameter: {0}")]
    Domain(String),

    #[error("Mellin argument s = {s} outside the strip s > {bound}")]
    StripViolation { s: f64, bound: f64 },

    #[error("coefficient {kind} requires the {expected} pole structure")]
    CaseMismatch {
        kind: &'static str,
        expected: &'static str,
    },

    #[error("coefficient index n = {n} is below the integer gap N = {gap}")]
    IndexBelowGap { n: usize, gap: usize },

    #[error("quadrature for {what} failed to reach tolerance (estimated error {abs_error:e})")]
    QuadratureFailure { what: &'static str, abs_error: f64 },

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
