use thiserror::Error;

use crate::angmom::HalfInt;

/// Errors produced by the simulation and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not a valid density matrix: {0}")]
    Unphysical(String),

    #[error("transition f={f} -> F={excited} is not dipole-allowed")]
    ForbiddenTransition { f: HalfInt, excited: HalfInt },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown reference state `{0}`")]
    UnknownState(String),

    #[error("invalid time grid: {0}")]
    InvalidTimes(String),

    #[error("singular design matrix in envelope fit (condition estimate {condition:.3e})")]
    SingularDesign { condition: f64 },

    #[error("population channel is unobservable: |V_I| = {v_imag:.3e} below threshold")]
    ChannelDead { v_imag: f64 },

    #[error("no measurements supplied")]
    EmptyMeasurements,

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e}, last error norm {err_norm:.3e}); system may be too stiff")]
    StepSizeUnderflow { t: f64, h: f64, err_norm: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
