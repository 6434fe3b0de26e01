use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
    /// A fisheye pixel or ray outside the lens field of view. This marks an
    /// unmapped pixel rather than a failure.
    #[error("outside field of view (phi {phi} > {limit} rad)")]
    OutsideFov { phi: f64, limit: f64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("degenerate baseline: camera centers coincide")]
    DegenerateBaseline,
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
