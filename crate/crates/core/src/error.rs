use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward() needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("graph already consumed by a previous backward pass")]
    GraphConsumed,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing gradient for parameter `{0}`")]
    MissingGrad(String),

    #[error("non-finite value encountered in `{0}`")]
    NonFinite(String),

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
