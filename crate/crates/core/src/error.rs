use thiserror::Error;

/// Errors raised by the solvers and their parameter checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("time step {dt:e} is unstable for max rate {rate:e}; need dt <= {required:e}")]
    Unstable { dt: f64, rate: f64, required: f64 },

    #[error("non-finite value at t = {t} (sample {index})")]
    NonFinite { t: f64, index: usize },

    #[error("singular input: {0}")]
    Singular(&'static str),

    #[error("coupling field is off at t = {0}; the Fourier relation degenerates")]
    CouplingOff(f64),

    #[error("trace drifted by {drift:e} at t = {t}")]
    TraceDrift { t: f64, drift: f64 },

    #[error("conditional phase undefined: coherence magnitude {0:e}")]
    UndefinedPhase(f64),

    #[error("state left the qubit subspace (weight {0:e})")]
    LeftSubspace(f64),

    #[error("input {input} leaked {leakage:.3} of its weight out of the qubit subspace")]
    Leakage { input: usize, leakage: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("normalization violated: trace = {0}")]
    Normalization(f64),

    #[error("fit underdetermined: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
