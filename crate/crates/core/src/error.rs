use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid video spec: {0}")]
    InvalidSpec(String),
    #[error("sequence file too short: need {needed} bytes, found {found}")]
    FileTooShort { needed: u64, found: u64 },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("plane dimensions {width}x{height} are not even")]
    OddDimensions { width: usize, height: usize },
    #[error("invalid plane: {0}")]
    InvalidPlane(String),
    #[error("CU ({cu_x}, {cu_y}) is outside the frame")]
    CuOutOfRange { cu_x: usize, cu_y: usize },
    #[error("inconsistent schedule: {0}")]
    Schedule(String),
    #[error("empty lookahead window")]
    EmptyWindow,
    #[error("frame-difference window needs at least two frames, got {0}")]
    ShortWindow(usize),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("invalid layer {0}")]
    InvalidLayer(u8),
    #[error("no frames left to budget")]
    Exhausted,
    #[error("missing pre-analysis for frame {0}")]
    MissingAnalysis(usize),
    #[error("frame {0} was already reported")]
    DoubleReport(usize),
    #[error("no pending decision for frame {0}")]
    NotPending(usize),
    #[error("QP {0} is outside [0, 51]")]
    QpOutOfRange(f64),
    #[error("degenerate R-D curve: {0}")]
    DegenerateCurve(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("more input frames are needed before the next decision")]
    NeedMoreInput,
    #[error("a decision is awaiting its encode report")]
    AwaitingReport,
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub(crate) fn positive(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { what, value })
    }
}
