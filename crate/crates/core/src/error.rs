use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error(
        "propagator built with {steps} steps is not unitary: max |U^dag U - 1| = {deviation:.3e}"
    )]
    NonUnitary { steps: usize, deviation: f64 },

    #[error(
        "finite-difference step {epsilon:e} is below numerical noise \
         (|psi+ - psi-| = {difference:.3e}); use a larger epsilon"
    )]
    EpsilonTooSmall { epsilon: f64, difference: f64 },

    #[error("QFI evaluated to {value:.3e} (substantially negative); try a larger epsilon")]
    NegativeQfi { value: f64 },

    #[error("expectation value has imaginary residue {residue:.3e}; operator is not Hermitian")]
    NonHermitian { residue: f64 },

    #[error("schedule entry {entry} lies beyond the evolution horizon of {horizon} periods")]
    ScheduleBeyondHorizon { entry: u64, horizon: u64 },

    #[error("non-positive data at indices {indices:?} cannot be fitted on log-log axes")]
    NonPositiveData { indices: Vec<usize> },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput { field, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
