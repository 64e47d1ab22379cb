use thiserror::Error;

/// Errors surfaced by graph construction, operator validation and run setup.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is disconnected: {0}")]
    Disconnected(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("matrix is not symmetric (max |w_ij - w_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("invalid mixing matrix: {0}")]
    InvalidMixing(String),

    #[error("laziness parameter must lie in (0, 1), got {0}")]
    InvalidLaziness(f64),

    #[error("mixing matrix is not positive definite (smallest eigenvalue {0:.3e}); apply lazify(W, tau) first")]
    NotPositiveDefinite(f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("operator violates the A/B/C requirements: {0}")]
    InvalidOperator(String),

    #[error("operator is not contractive: block spectral radius {0:.6} >= 1")]
    NonContractive(f64),

    #[error("sampling mode {mode} is not allowed for method {method}")]
    SamplingMismatch { method: String, mode: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("theory constants unavailable: {0}")]
    Theory(String),

    #[error("rate fit failed: {0}")]
    RateFit(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
