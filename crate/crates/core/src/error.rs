use thiserror::Error;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid configuration; `key` names the offending entry (dotted path).
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A computation produced NaN/Inf or left its admissible region.
    #[error("numeric fault in {context}: {message}")]
    NumericFault {
        context: &'static str,
        message: String,
    },

    /// API misuse, e.g. out-of-order samples.
    #[error("usage error: {0}")]
    Usage(String),

    /// Not enough history yet; the caller should hold its previous output.
    #[error("warm-up: {0}")]
    WarmUp(&'static str),

    /// Control argument outside the open saturation interval (-beta, beta).
    #[error("saturation-domain error: |{value}| exceeds bound {beta}")]
    SaturationDomain { value: f64, beta: f64 },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn is_warm_up(&self) -> bool {
        matches!(self, Error::WarmUp(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
