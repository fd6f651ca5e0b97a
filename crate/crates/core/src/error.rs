use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator, the oracle and the file formats.
#[derive(Debug, Error)]
pub enum PcError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration diverged: non-finite value in layer {layer} ({what})")]
    Divergence { layer: usize, what: &'static str },

    #[error("training failed at sample {index}: {source}")]
    SampleFailed {
        index: usize,
        #[source]
        source: Box<PcError>,
    },

    #[error("ill-posed system: {0}")]
    IllPosed(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("config parse error on line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type PcResult<T> = Result<T, PcError>;

impl PcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PcError::Io {
            path: path.into(),
            source,
        }
    }
}
