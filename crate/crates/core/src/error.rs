use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("invalid offset vector: {0}")]
    InvalidOffset(String),
    #[error("degenerate offset: {axis} offsets sum to {sum}, refinement requires at most {limit}")]
    DegenerateOffset { axis: &'static str, sum: f64, limit: f64 },
    #[error("offset component {component} = {value} is outside [-1, 1]")]
    OutOfRangeOffset { component: &'static str, value: f64 },
    #[error("no valid stripes: lower bound {lower} exceeds upper bound {upper}")]
    EmptyValidity { lower: i64, upper: i64 },
    #[error("validity flags must form one non-empty contiguous run")]
    NonContiguousValidity,
    #[error("insufficient keypoints: {0}")]
    InsufficientKeypoints(String),
    #[error("degenerate keypoint fit on {axis} axis: scale {scale}")]
    DegenerateFit { axis: &'static str, scale: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown identity label {label} (bank has {classes} classes)")]
    UnknownLabel { label: usize, classes: usize },
    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),
    #[error("query {0} has no ground-truth positives")]
    NoPositives(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
