use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular or too ill-conditioned to invert")]
    SingularMatrix,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("quadratic form w^H M w vanishes; direction is degenerate")]
    DegenerateDirection,
    #[error("matrix dimension {0} outside supported range 2..=4")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("signal is empty")]
    EmptySignal,
    #[error("invalid STFT geometry: {0}")]
    BadGeometry(String),
    #[error("invalid room geometry: {0}")]
    GeometryError(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("impulse response of {len} taps exceeds frame size {frame_size}")]
    RirTooLong { len: usize, frame_size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("reference signal {0} is silent")]
    SilentReference(usize),
    #[error("bad mask header: {0}")]
    BadMaskHeader(String),
    #[error("bad demixing dump: {0}")]
    BadDemixingDump(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}
