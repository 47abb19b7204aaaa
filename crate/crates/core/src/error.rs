use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("exponent p must be strictly greater than 2, got {0}")]
    InvalidExponent(f64),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("invalid graph: {}", .0.join("; "))]
    InvalidGraph(Vec<String>),

    #[error("graph class mismatch: {0}")]
    Classification(String),

    #[error("integration blew up at arc length {arc}")]
    BlowUp { arc: f64 },

    #[error("mesh size {h} must be smaller than the shortest edge ({shortest})")]
    MeshTooCoarse { h: f64, shortest: f64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}
