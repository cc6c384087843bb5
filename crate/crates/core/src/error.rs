use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("sigma = 0 is outside the scope of the dichotomy theorems")]
    SigmaZero,

    #[error("q = {q} is outside the admissible window: {bound}")]
    QOutsideWindow { q: f64, bound: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("Lebesgue exponent r = {0} must satisfy r >= 1")]
    BadExponent(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero probe: smoothing ratio undefined")]
    ZeroProbe,

    #[error("box too small: need L^2 >= {needed} for T = {t}, have L^2 = {have}")]
    BoxTooSmall { t: f64, needed: f64, have: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("beta-function arguments not positive ({a}, {b}): admissibility bug")]
    BetaDomain { a: f64, b: f64 },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
