use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Structurally or numerically singular matrix. `pivot` is the elimination
    /// step at which the pivot fell below the threshold.
    #[error("matrix is singular (pivot {pivot}, |pivot| = {magnitude:e})")]
    Singular { pivot: usize, magnitude: f64 },

    /// The augmented LRWI normal matrix could not be factorized.
    #[error(
        "augmented normal matrix is close to singular or badly scaled \
         (lambda = {lambda:e}, gamma = {gamma:e}{}{})",
        betas.map(|(b1, b2)| alloc::format!(", beta1 = {b1:e}, beta2 = {b2:e}")).unwrap_or_default(),
        pivot.map(|p| alloc::format!(", pivot {p}")).unwrap_or_default()
    )]
    BadlyScaled {
        lambda: f64,
        gamma: f64,
        betas: Option<(f64, f64)>,
        /// Failing elimination step, or `None` when the factorization
        /// succeeded but refinement could not reach the residual tolerance.
        pivot: Option<usize>,
    },

    /// A normal-equation solve missed its residual tolerance.
    #[error("normal-equation residual {residual:e} exceeds tolerance {tolerance:e}")]
    Inaccurate { residual: f64, tolerance: f64 },

    #[error("instance too large for a dense diagnostic: {size} > {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("at {frequency} Hz: {inner}")]
    AtFrequency { frequency: f64, inner: Box<Error> },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at_frequency(self, frequency: f64) -> Self {
        Error::AtFrequency {
            frequency,
            inner: Box::new(self),
        }
    }

    /// Attaches `(β₁, β₂)` to a badly-scaled error, looking through frequency context.
    pub fn with_betas(self, beta1: f64, beta2: f64) -> Self {
        match self {
            Error::BadlyScaled { lambda, gamma, pivot, .. } => {
                Error::BadlyScaled { lambda, gamma, betas: Some((beta1, beta2)), pivot }
            }
            Error::AtFrequency { frequency, inner } => inner.with_betas(beta1, beta2).at_frequency(frequency),
            other => other,
        }
    }

    /// Strips frequency context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtFrequency { inner, .. } => inner.root(),
            other => other,
        }
    }

    /// True for singular or badly scaled systems.
    pub fn is_singular(&self) -> bool {
        matches!(self.root(), Error::Singular { .. } | Error::BadlyScaled { .. } | Error::Inaccurate { .. })
    }
}
