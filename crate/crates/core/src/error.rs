use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("life table: {0}")]
    LifeTable(String),

    #[error("bequest schedule: {0}")]
    Schedule(String),

    #[error("scaled bequest schedule has no usable kappa: {0}; run calibrate_kappa first")]
    Uncalibrated(String),

    #[error("controls undefined at t={t} (defined on [0, {end}])")]
    ControlsUndefined { t: f64, end: f64 },

    #[error("non-finite state on path {path} at step {step} (t={t})")]
    NonFinite { path: usize, step: usize, t: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    /// Stable machine-readable code, used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "E_PARAM",
            Error::NegativeTime(_) => "E_NEGATIVE_TIME",
            Error::LifeTable(_) => "E_LIFE_TABLE",
            Error::Schedule(_) => "E_SCHEDULE",
            Error::Uncalibrated(_) => "E_UNCALIBRATED",
            Error::ControlsUndefined { .. } => "E_CONTROLS",
            Error::NonFinite { .. } => "E_NON_FINITE",
            Error::Parse { .. } => "E_PARSE",
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        Err(Error::NegativeTime(t))
    } else {
        Ok(())
    }
}
