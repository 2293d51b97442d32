use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported bit depth: {0}")]
    UnsupportedDepth(u32),
    #[error("unsupported channel count: {0}")]
    UnsupportedChannels(usize),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("disparity {value} at ({u}, {v}) does not fit a 16-bit PNG")]
    Overflow { u: usize, v: usize, value: f64 },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid dimensions {0}x{1}")]
    InvalidDimensions(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("window of radius {radius} does not fit a {width}x{height} image")]
    WindowTooLarge {
        radius: usize,
        width: usize,
        height: usize,
    },
    #[error("block has zero variance")]
    DegenerateBlock,
    #[error("block out of bounds")]
    OutOfBounds,
    #[error("only {found} correspondences found, need at least 2")]
    InsufficientMatches { found: usize },
    #[error("rank-deficient fit: samples span fewer than two distinct rows")]
    RankDeficient,
    #[error("no valid samples")]
    NoSamples,
    #[error("no jointly valid pixels to evaluate")]
    NoValidPixels,
    #[error("bad scene: {0}")]
    BadScene(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
