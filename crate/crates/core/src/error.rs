use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum CsmError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value outside activation bounds: {0}")]
    Domain(String),

    #[error("relaxation diverged at layer {layer}, iteration {iteration}")]
    Divergence { layer: usize, iteration: usize },

    #[error("relaxation did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("update rule {0} cannot be dispatched here")]
    WrongDispatch(&'static str),

    #[error("singular or ill-conditioned matrix: {0}")]
    Singular(String),

    #[error("{path}: parse error at byte {offset}: {msg}")]
    Parse {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    #[error("requested {requested} samples of class {class}, only {available} available")]
    Oversubscribed {
        class: u8,
        requested: usize,
        available: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("training aborted: {0}")]
    Aborted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CsmError>;
