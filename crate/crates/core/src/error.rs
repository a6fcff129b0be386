use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value at row {row} in {context}")]
    NonFinite { context: &'static str, row: usize },
    #[error("argument {value} at row {row} exceeds the overflow guard {limit}")]
    Overflow { row: usize, value: f64, limit: f64 },
    #[error("empty support")]
    EmptySupport,
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("infeasible or stalled: constraint residual {residual:e} not reduced across two escalations")]
    Stalled { residual: f64 },
    #[error("step size too large: residual grew for {0} consecutive iterations")]
    Divergence(usize),
    #[error("noise calibration failed: {0}")]
    Calibration(String),
    #[error("image error: {0}")]
    Image(String),
    #[error("zero reference vector")]
    ZeroReference,
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { context, expected, got })
    }
}
