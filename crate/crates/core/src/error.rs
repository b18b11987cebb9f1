use thiserror::Error;

/// Errors raised when a physical or numerical parameter is outside its domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} must be {requirement}, got {value}")]
    OutOfDomain {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("operation requires a {expected} interferometer")]
    WrongInstrument { expected: &'static str },
    #[error("discretization too coarse: dt*rate = {ratio} exceeds {limit}")]
    CoarseStep { ratio: f64, limit: f64 },
    #[error("kernel horizon {horizon} s leaves tail mass {tail_fraction:e} above tolerance {tolerance:e}")]
    HorizonTooShort {
        horizon: f64,
        tail_fraction: f64,
        tolerance: f64,
    },
    #[error("{0}")]
    Numerical(String),
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::OutOfDomain {
            name,
            requirement: "> 0",
            value,
        })
    }
}

pub(crate) fn require_nonnegative(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::OutOfDomain {
            name,
            requirement: ">= 0",
            value,
        })
    }
}
