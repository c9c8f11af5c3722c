use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: ir {ir:?}, vi {vi:?}, fused {fused:?} (width, height)")]
    DimensionMismatch { ir: (usize, usize), vi: (usize, usize), fused: (usize, usize) },

    #[error("image has {got} pixels, {width}x{height} needs {expected}")]
    PixelCount { width: usize, height: usize, expected: usize, got: usize },

    #[error("empty image")]
    Empty,

    #[error("unknown metric `{0}` (expected one of mi, ncie, qabf, qp, qy, vif)")]
    UnknownMetric(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;
