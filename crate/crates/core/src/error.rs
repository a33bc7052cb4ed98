use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants map onto CLI exit codes: [`Error::Config`] is a configuration
/// problem (exit 2), everything numerical or contractual exits with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("y = {y} lies outside the landscape domain [{y_min}, {y_max}]")]
    Domain { y: f64, y_min: f64, y_max: f64 },

    #[error("invalid landscape: {0}")]
    InvalidLandscape(String),

    #[error("degenerate stationary distribution at eta = {eta}: {detail}; try a larger eta or a smaller domain")]
    DegenerateDistribution { eta: f64, detail: String },

    #[error("{op}: numerical failure: {detail}")]
    Numerical { op: &'static str, detail: String },

    #[error("{op}: contract violation: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error(
        "spectrum is gapless at eta_b = {eta_b}: (lambda3 - lambda2)/lambda2 = {relative_gap:.3e}"
    )]
    Gapless { eta_b: f64, relative_gap: f64 },

    #[error("particle {particle} diverged at step {step} (t = {time}); reduce dt below {suggested_dt:e}")]
    Divergence {
        particle: usize,
        step: usize,
        time: f64,
        suggested_dt: f64,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numerical(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 3,
        }
    }
}
