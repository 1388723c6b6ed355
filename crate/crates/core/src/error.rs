use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty loss support: every position is ignored")]
    EmptyLossSupport,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("network spec: {0}")]
    Spec(String),

    #[error("weights: {0}")]
    Weights(String),

    #[error("data: {0}")]
    Data(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by NaN/Inf appearing during training or evaluation.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }

    /// True for errors in user-supplied configuration or arguments.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
