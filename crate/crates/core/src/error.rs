use thiserror::Error;

/// Errors produced by the pooling, segmentation and metrics operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Array lengths or grid shapes do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A tensor file is malformed (bad magic, version, or truncation).
    #[error("format error: {0}")]
    Format(String),

    /// A tensor file holds a different element type than requested.
    #[error("dtype mismatch: {0}")]
    Dtype(String),

    /// An argument is outside its documented range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A cache or label map does not match the data it claims to describe.
    #[error("internal consistency error: {0}")]
    Inconsistency(String),

    /// Training produced a non-finite loss.
    #[error("divergence at step {step}: loss is not finite")]
    Divergence { step: usize },

    /// An allocation for a sweep point could not be satisfied.
    #[error("resource error at P={pixels}, K={labels}: {msg}")]
    Resource {
        pixels: usize,
        labels: usize,
        msg: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
