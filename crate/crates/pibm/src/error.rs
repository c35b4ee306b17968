//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failure classes. The CLI maps each class onto a distinct exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parameter outside the supported domain: {0}")]
    Domain(String),
    #[error("evaluation at a pole: {0}")]
    Pole(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("numerical accuracy not reached: {0}")]
    Accuracy(String),
    #[error("simulation diverged: {0}")]
    Diverged(String),
    #[error("time step too large: {0}")]
    StepSize(String),
    #[error("invalid contour: {0}")]
    Contour(String),
    #[error("degenerate fluctuation scale: {0}")]
    DegenerateScale(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    InvalidConfig,
    Numerical,
    Capacity,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_) | Error::Domain(_) | Error::Contour(_) => {
                ErrorClass::InvalidConfig
            }
            Error::Capacity(_) => ErrorClass::Capacity,
            Error::Pole(_)
            | Error::Accuracy(_)
            | Error::Diverged(_)
            | Error::StepSize(_)
            | Error::DegenerateScale(_) => ErrorClass::Numerical,
        }
    }
}
