use thiserror::Error;

/// Errors produced anywhere in the stabilizer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point maps to infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("homography is singular")]
    Singular,
    #[error("quadrangle is degenerate after transform")]
    DegenerateQuad,
    #[error("frame {width}x{height} is smaller than the 32x32 minimum")]
    FrameTooSmall { width: usize, height: usize },
    #[error("search window lies entirely outside the target plane")]
    NoMatch,
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("EnsureInside did not converge within {0} iterations")]
    EnsureInsideDiverged(usize),
    #[error("deficit region is type O and cannot be stitched")]
    TypeO,
    #[error("seam search region is degenerate")]
    DegenerateBand,
    #[error("no finite seam path between start and end nodes")]
    NoSeam,
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
