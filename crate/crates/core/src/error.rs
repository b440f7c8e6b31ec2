use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("position {0:?} lies outside the water column (0, {1})")]
    OutsideWaterColumn([f64; 3], f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("noise file exhausted: needed {needed} samples from offset {offset}, file holds {available}")]
    NoiseExhausted {
        needed: usize,
        offset: usize,
        available: usize,
    },

    #[error("record carries no ground-truth channel (ingested data cannot drive the oracle)")]
    MissingTruth,

    #[error("steering matrix is rank deficient beyond ridge tolerance (receiver {receiver})")]
    RankDeficient { receiver: usize },

    #[error("power iteration did not converge after {restarts} restarts")]
    NoConvergence { restarts: usize },

    #[error("signal is degenerate: {0}")]
    Degenerate(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
