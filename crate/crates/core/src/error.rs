use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("srt parse error at byte {offset}: {message}")]
    SrtParse { offset: usize, message: String },

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("slice [{start_ms}, {end_ms}) ms is out of range for a {duration_ms} ms buffer")]
    SliceOutOfRange {
        start_ms: u64,
        end_ms: u64,
        duration_ms: u64,
    },

    #[error("word error rate is undefined for an empty reference")]
    EmptyReference,

    #[error("segment {0} has no word error rate")]
    MissingWer(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding has zero norm")]
    ZeroNorm,

    #[error("no embedding for utterance {0}")]
    MissingEmbedding(String),

    #[error("title mismatch: {0} vs {1}")]
    TitleMismatch(String, String),

    #[error("need at least k={k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },

    #[error("invalid run length {0}")]
    InvalidRunLength(usize),

    #[error("length mismatch: {0} hypotheses vs {1} references")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid rating: {0}")]
    InvalidRating(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Adapter(#[from] crate::adapter::AdapterError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
