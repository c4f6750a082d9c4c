//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    PgmFormat { path: PathBuf, detail: String },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("glyph not 90x60: got {height}x{width}")]
    GlyphSize { height: usize, width: usize },

    #[error("zone not 10x10: got {height}x{width}")]
    ZoneSize { height: usize, width: usize },

    #[error("empty glyph")]
    EmptyGlyph,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("empty evaluation set")]
    EmptyEvalSet,

    #[error("training diverged at epoch {epoch}: MSE is not finite")]
    Divergence { epoch: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("model file {path}: {detail}")]
    ModelFormat { path: PathBuf, detail: String },

    #[error("dataset: {0}")]
    Dataset(String),
}
