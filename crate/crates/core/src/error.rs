use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measure has no atoms")]
    EmptyMeasure,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("atom {index} has non-positive or non-finite mass {mass}")]
    BadMass { index: usize, mass: f64 },
    #[error("non-finite coordinate or value at index {0}")]
    NonFinite(usize),
    #[error("growth exponent {n} must lie in (0, {d}]")]
    BadExponent { n: f64, d: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cube Q is not contained in cube R")]
    NotNested,
    #[error("cubes are not concentric")]
    NotConcentric,
    #[error("doubling search requires beta > alpha^n (beta = {beta}, alpha^n = {bound})")]
    DoublingPrecondition { beta: f64, bound: f64 },
    #[error("A = {a} is below the configured minimum {a_min}")]
    ABelowMinimum { a: f64, a_min: f64 },
    #[error("kernel profile supports d <= 3 (got d = {0})")]
    UnsupportedDimension(usize),
    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weight must be strictly positive and finite (index {0})")]
    BadWeight(usize),
    #[error("exponent p = {0} must exceed 1")]
    BadExponentP(f64),
    #[error("point set is not covered by the cube family (point {0})")]
    NotCovered(usize),
    #[error("measure component labels are missing")]
    NoComponents,
    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
