use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("capacity exceeded: {what} needs {requested}, cap is {cap}")]
    Capacity {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("scale j={j} out of range; valid scales are {min}..={max}")]
    ScaleOutOfRange { j: i32, min: i32, max: i32 },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("numerical failure in {what}: residual {residual:e}")]
    NumericalFailure { what: String, residual: f64 },

    #[error("function undefined on spectrum: {0}")]
    Domain(String),

    #[error("no closed form for L^{p}->L^{q} block norms; use a norm bracket")]
    UseNormestBracket { p: f64, q: f64 },

    #[error("unsafe time t={t}: {reason}")]
    UnsafeTime { t: f64, reason: String },

    #[error("insufficient span for exponent fit: {0}")]
    InsufficientSpan(String),

    #[error("insufficient decay for kernel fit: {0}")]
    InsufficientDecay(String),

    #[error("norm bracket too wide: width/midpoint = {ratio:.3} at {at}")]
    BracketTooWide { ratio: f64, at: String },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
