use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value {value} produced at abscissa {abscissa}")]
    NonFinite { abscissa: f64, value: f64 },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("infeasible moments: {0}")]
    Infeasible(String),

    #[error("max-entropy fit did not converge after {iterations} Newton steps (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Coefficients of the best iterate, in rescaled coordinates.
        best: Vec<f64>,
    },

    #[error("polynomial fit failed: {0}")]
    Fit(String),

    #[error("subspace iteration failed: {0}")]
    RankDeficient(String),

    #[error("oracle self-consistency failure: {0}")]
    Consistency(String),

    #[error("connection error: {0}")]
    Connection(String),

    #[error("incompatible remote denoiser: {0}")]
    Incompatible(String),

    #[error("decode error: expected {expected} payload bytes, got {actual}")]
    Decode { expected: usize, actual: usize },

    #[error("malformed response: {0}")]
    Protocol(String),

    #[error("request timed out (retriable): {0}")]
    Timeout(String),

    #[error("remote denoiser returned HTTP {status}: {body}")]
    Remote { status: u16, body: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for failures of an out-of-process denoiser.
    pub fn is_remote(&self) -> bool {
        matches!(
            self,
            Error::Connection(_)
                | Error::Incompatible(_)
                | Error::Decode { .. }
                | Error::Protocol(_)
                | Error::Timeout(_)
                | Error::Remote { .. }
        )
    }

    /// True for failures of the numerical routines themselves.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Instability(_)
                | Error::Infeasible(_)
                | Error::NonConvergence { .. }
                | Error::Fit(_)
                | Error::RankDeficient(_)
                | Error::Consistency(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
