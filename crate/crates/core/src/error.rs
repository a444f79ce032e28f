use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("invalid measurement document: {0}")]
    InvalidMeasurements(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("branch {from}-{to} has zero series impedance")]
    ZeroImpedance { from: u32, to: u32 },

    #[error("power flow did not converge in {iterations} iterations (mismatch {mismatch:.3e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("unobservable problem: {0}")]
    Unobservable(String),

    #[error("bus {0} has zero injection current; its power-factor angle is undefined")]
    ZeroInjection(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
