use thiserror::Error;

/// Errors raised across the pricing, calibration and ingest layers.
#[derive(Debug, Error)]
pub enum GossetError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge on [{lo}, {hi}] after {subdivisions} subdivisions (error estimate {error:e}, tolerance {tolerance:e})")]
    QuadratureNotConverged {
        lo: f64,
        hi: f64,
        subdivisions: usize,
        error: f64,
        tolerance: f64,
    },

    #[error("{what} failed to converge: {detail}")]
    NotConverged { what: &'static str, detail: String },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("propagated variance is negative ({0:e}); covariance term dominates")]
    NegativeVariance(f64),

    #[error("{path}: line {line}: {message}")]
    MalformedRow {
        path: String,
        line: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl GossetError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        GossetError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by the inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            GossetError::InvalidParameter { .. }
                | GossetError::MalformedRow { .. }
                | GossetError::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, GossetError>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(GossetError::invalid(name, format!("must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(GossetError::invalid(name, format!("must be positive and finite, got {value}")))
    }
}

pub(crate) fn ensure_open_unit(name: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(GossetError::invalid(name, format!("must lie in (0, 1), got {p}")))
    }
}
