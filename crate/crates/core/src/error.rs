use thiserror::Error;

/// Errors shared across the crate.
#[derive(Error, Debug)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("power iteration did not converge within {max_iter} iterations (last estimate {last})")]
    NoConvergence { max_iter: usize, last: f64 },

    #[error("majorization violated: {0}")]
    Majorization(String),

    #[error("overdamped regime: |cos w| = {0} > 1, no oscillation")]
    Overdamped(f64),

    #[error("solver diverged at subiteration {k}: cost {cost} exceeds 10x initial cost {initial}")]
    Diverged { k: usize, cost: f64, initial: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
