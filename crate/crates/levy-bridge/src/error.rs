use thiserror::Error;

/// Errors surfaced by density evaluation, quadrature, sampling, and the
/// conditional-law formulas.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A numerical routine failed to reach its tolerance (quadrature
    /// non-convergence, support bracketing failure, root finding, ...).
    /// Never silently returns a guess instead.
    #[error("numerical failure in {context}: {detail}")]
    NumericalFailure { context: String, detail: String },

    /// The pinning pair (r, z) violates 0 < f_r(z) < ∞.
    #[error("degenerate pin: f_{{{r}}}({z}) is zero or non-finite")]
    DegeneratePin { r: f64, z: f64 },

    /// A bridge transition was requested from a state the process cannot
    /// occupy (zero denominator in the transition kernel).
    #[error("unreachable state: zero transition denominator (s={s}, x={x}, r={r}, z={z})")]
    UnreachableState { s: f64, x: f64, r: f64, z: f64 },

    /// A Bayes denominator vanished: the conditioning event has zero
    /// likelihood under the model.
    #[error("zero evidence: {0}")]
    ZeroEvidence(String),

    /// A formula's stated precondition does not hold for the supplied
    /// measures (e.g. the two-time posterior requires F_tau(t1) = 0).
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
}

impl Error {
    pub fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NumericalFailure {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
