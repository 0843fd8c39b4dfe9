use thiserror::Error;

/// Errors raised by the engine. Each message names the violated constraint.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("range error: {what} = {value} outside [{lo}, {hi}]")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate band: upper distribution has zero total mass")]
    DegenerateBand,

    #[error("alignment error: cylindrical date {date} is not a grid time")]
    Alignment { date: f64 },

    #[error("unsupported dimension: cylindrical payoff with {dims} dates (lattice supports at most 2)")]
    UnsupportedDimension { dims: usize },

    #[error("band violation: {0}")]
    BandViolation(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("expression parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(
        "numerical inconsistency: dual estimate {dual} exceeds primal {primal} by more than {allowance} (scheme {scheme})"
    )]
    NegativeGap {
        primal: f64,
        dual: f64,
        allowance: f64,
        scheme: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
