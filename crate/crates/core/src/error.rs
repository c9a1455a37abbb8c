use thiserror::Error;

/// Errors surfaced by state construction, channel application, measurement
/// conditioning, and the Fock-space oracle.
#[derive(Debug, Error)]
pub enum QubusError {
    #[error("qubit index {index} out of range for {count} qubit(s)")]
    QubitIndexOutOfRange { index: usize, count: usize },

    #[error("mode index {index} out of range for {count} mode(s)")]
    ModeIndexOutOfRange { index: usize, count: usize },

    #[error("transmission eta = {0} outside (0, 1]")]
    InvalidTransmission(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state is not normalized (trace = {0})")]
    NotNormalized(f64),

    #[error("not a valid density matrix: {0}")]
    NotDensity(String),

    #[error("Fock truncation {given} below the required {required} for this amplitude")]
    TruncationTooSmall { required: usize, given: usize },

    #[error("Fock-space norm leakage {leak:.3e} exceeds 1e-8; increase the truncation")]
    NormLeakage { leak: f64 },

    #[error("requested scheme has zero success probability")]
    ZeroSuccessProbability,

    #[error("numeric assertion failed: {0}")]
    NumericAssertion(String),
}

pub type Result<T> = std::result::Result<T, QubusError>;
