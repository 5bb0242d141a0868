use alloc::boxed::Box;
use alloc::string::String;

use crate::integrate::PathSample;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape coefficient {name} = {value:e} is not a usable divisor")]
    NonpositiveDivisorCoefficient { name: &'static str, value: f64 },
    #[error("invalid physical input: {0}")]
    InvalidPhysicalInput(String),
    #[error("width must be positive, got {0}")]
    NonpositiveWidth(f64),
    #[error("xi must be positive, got {0}")]
    NonpositiveXi(f64),
    #[error("profile rejected: {0}")]
    InvalidProfile(String),
    #[error("width crossed zero at t = {time}")]
    StepBlowUp { time: f64, partial: Box<PathSample> },
    #[error("state magnitude exceeded the overflow bound at t = {time}")]
    NumericalOverflow { time: f64, partial: Option<Box<PathSample>> },
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("auxiliary grid exhausted near the clock singularity: {0}")]
    GridExhausted(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("histogram windows do not match: {0}")]
    WindowMismatch(String),
    #[error("controlled trajectory left the half-plane at t = {time} (z1 = {z1})")]
    PositivityViolated { time: f64, z1: f64 },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::ConfigError(msg.into())
    }
}
