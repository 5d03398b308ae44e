use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("ingest error in {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("ingest error: {0}")]
    Projection(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("forest error: {0}")]
    Forest(String),

    #[error("model file error: {0}")]
    ModelIo(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("map error: {0}")]
    Map(String),

    #[error("no coverage: {0}")]
    NoCoverage(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("point ({x:.3}, {y:.3}) lies outside the map extent")]
    OutOfMap { x: f64, y: f64 },

    #[error("generator error: {0}")]
    Synth(String),

    #[error("I/O error on {path}: {source}")]
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
    pub(crate) fn ingest(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Ingest {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised while reading or validating input geodata.
    pub fn is_ingest(&self) -> bool {
        matches!(self, Error::Ingest { .. } | Error::Projection(_))
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
