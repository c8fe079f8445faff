use thiserror::Error;

/// Errors produced by the pipeline stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box [{0}, {1}, {2}, {3}]: coordinates must be finite with x2 >= x1 and y2 >= y1")]
    InvalidBox(f64, f64, f64, f64),

    #[error("degenerate box [{0}, {1}, {2}, {3}]: width and height must be positive")]
    DegenerateBox(f64, f64, f64, f64),

    #[error("log-scale delta {value} exceeds the decode limit {limit}")]
    DeltaOverflow { value: f64, limit: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("class mismatch: {0} vs {1}")]
    ClassMismatch(u32, u32),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("sample pool has neither positives nor negatives")]
    EmptyPool,

    #[error("no positive training samples")]
    NoPositives,

    #[error("no ground truth to evaluate against")]
    NoGroundTruth,

    #[error("tube spans {0} frame(s); trimming needs at least two")]
    TubeTooShort(usize),

    #[error("no average length for class {0}")]
    MissingClassLength(u32),

    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
