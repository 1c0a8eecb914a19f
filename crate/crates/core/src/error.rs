use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{what} is not divisible by coupling ratio {ratio}")]
    Divisibility { what: String, ratio: usize },

    #[error("circulant embedding failed: negative spectral mass {relative:.3e} exceeds tolerance after {doublings} doublings (embedding size {size})")]
    EmbeddingFailed {
        relative: f64,
        doublings: u32,
        size: usize,
    },

    #[error("Cholesky factorization failed: kernel matrix is indefinite beyond the ridge")]
    Factorization,

    #[error("degenerate quadratic form: denominator {0:.3e} is below tolerance")]
    DegenerateForm(f64),

    #[error("domain length {domain} is smaller than required {required}")]
    DomainTooSmall { domain: f64, required: f64 },

    #[error("spectral truncation tolerance not met: {0}")]
    Truncation(String),

    #[error("rate fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("binary dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
