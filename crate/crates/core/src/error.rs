use std::path::PathBuf;

/// Errors raised across the simulator and analysis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value violates a documented invariant or precondition.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    /// A file could not be decoded; `field` names the offending entry.
    #[error("parse error in {field}: {reason}")]
    Parse { field: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Numerical routine failed to reach its tolerance.
    #[error("did not converge: {0}")]
    NoConvergence(String),

    /// Time step too coarse for stable integration.
    #[error("unstable time step {time_step} us, use at most {suggested} us")]
    StepSize { time_step: f64, suggested: f64 },

    /// A phase reference pulse is too weak to measure.
    #[error("reference at {freq} MHz has SNR {snr:.2}, below threshold {threshold}")]
    WeakReference { freq: f64, snr: f64, threshold: f64 },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn parse(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid { .. } | Error::Parse { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Reject non-finite or out-of-range scalars with a field-level message.
pub(crate) fn ensure(cond: bool, field: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(field, reason()))
    }
}
