use thiserror::Error;

/// Errors raised by the spectral, integration and diagnostics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("operator {0} requires multiplier values at the same time")]
    MissingMultipliers(&'static str),

    #[error("operator {op} expects {expected} input field(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("time mismatch: fields at t={fields}, multipliers at t={multipliers}")]
    TimeMismatch { fields: f64, multipliers: f64 },

    #[error("step size underflow at t={t} (h={h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("non-finite value detected at t={t}")]
    NonFinite { t: f64 },

    #[error("maximum number of steps ({steps}) reached at t={t}")]
    MaxSteps { t: f64, steps: usize },

    #[error("density bound violated at t={t}: 1+N in [{min}, {max}]")]
    DensityViolation { t: f64, min: f64, max: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("run ended early: {0}")]
    RunFailed(String),
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
