use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid bounding box {0:?}: coordinates must be finite with x1 <= x2 and y1 <= y2")]
    InvalidBox([f64; 4]),

    #[error("degenerate box: height must be positive, got {0}")]
    DegenerateBox(f64),

    #[error("non-finite measurement")]
    NonFiniteMeasurement,

    #[error("resolution must be positive, got {0}x{1}")]
    ZeroResolution(u32, u32),

    #[error("resolution {width}x{height} is not divisible by patch size {patch}")]
    NotDivisible { width: u32, height: u32, patch: u32 },

    #[error("confidence {0} must be < 1 (clamp detections on ingestion)")]
    ConfidenceOutOfRange(f64),

    #[error("full-resolution MAC count is zero, relative reduction undefined")]
    ZeroFullResMac,

    #[error("frame {got} out of order: expected {expected}")]
    FrameOutOfOrder { expected: u64, got: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty ground truth")]
    EmptyGroundTruth,

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
