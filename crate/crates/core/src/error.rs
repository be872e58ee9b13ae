use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("non-triangular face at line {line}")]
    NonTriangularFace { line: usize },
    #[error("vertex index {index} out of range ({count} vertices)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("empty mesh")]
    EmptyMesh,
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("behind camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("placement overflow: placed {placed} of {requested} instances")]
    PlacementOverflow { placed: usize, requested: usize },
    #[error("degenerate crop")]
    DegenerateCrop,
    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("zero-area bounding box")]
    ZeroAreaBox,
    #[error("no valid depth in center window")]
    NoValidDepth,
    #[error("codebook object id {codebook} does not match {requested}")]
    ObjectMismatch { codebook: String, requested: String },
    #[error("empty observation cloud")]
    EmptyCloud,
    #[error("empty vertex set")]
    EmptyVertices,
    #[error("missing {what}: {path}")]
    Missing { what: String, path: PathBuf },
    #[error("manifest hash mismatch for {path}")]
    HashMismatch { path: PathBuf },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
