use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid rectangle: {0}")]
    InvalidRectangle(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("split threshold {tau} is not strictly inside ({lo}, {hi}) on axis {axis}")]
    SplitOutsideRegion { axis: usize, tau: f64, lo: f64, hi: f64 },
    #[error("node {0} is already split")]
    AlreadySplit(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("partition is not valid: {0}")]
    InvalidPartition(String),
    #[error("mean oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("trees are built on different partitions")]
    PartitionMismatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("counter out of range: {0}")]
    CounterOutOfRange(String),
    #[error("enumeration would produce about {estimate:.3e} rectangles (cap {cap})")]
    EnumerationTooLarge { estimate: f64, cap: usize },
    #[error("rectangle volume {volume} is below the family scale w = {w}")]
    VolumeTooSmall { volume: f64, w: f64 },
    #[error("rectangle support is not contained in the family axes")]
    SupportMismatch,
    #[error("no {side} approximant exists in the family for this rectangle")]
    NoApproximant { side: &'static str },
    #[error("empty side in split scoring")]
    EmptySide,
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("signal specification invalid: {0}")]
    SpecInvalid(String),
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),
    #[error("construction invariant violated: {0}")]
    Construction(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Format(e.to_string())
        }
    }
}

impl Error {
    /// I/O problems are distinguished from validation problems at the CLI boundary.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
