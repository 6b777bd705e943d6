use std::path::PathBuf;

use crate::sim::EpisodeLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} = {value} out of range: {constraint}")]
    Range {
        what: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("invalid guide shape: {0}")]
    InvalidShape(String),

    #[error("invalid table {path}: {reason}")]
    Table { path: PathBuf, reason: String },

    /// The joint left the numerically meaningful range. Carries everything logged
    /// up to the offending tick.
    #[error("episode diverged at t = {time:.4} s (|q| = {q:.3} rad)")]
    Diverged {
        time: f64,
        q: f64,
        partial: Box<EpisodeLog>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be finite, got {values:?}")))
    }
}
