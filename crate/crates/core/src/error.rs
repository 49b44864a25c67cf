use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tensor is not positive definite (eigenvalues {0:e}, {1:e})")]
    NotPositiveDefinite(f64, f64),
    #[error("degenerate stress tensor: {0}")]
    DegenerateStress(String),
    #[error("integration step failed at t = {t:e}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("moment index mismatch: ({i},{j}) vs ({k},{l})")]
    IndexError { i: usize, j: usize, k: usize, l: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("time step {dt:e} exceeds stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("relative speed {speed:e} exceeds collision majorant {majorant:e}")]
    MajorantExceeded { speed: f64, majorant: f64 },
    #[error("time {t:e} outside trajectory range [{t0:e}, {t1:e}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
    #[error("unknown criterion `{0}`")]
    UnknownCriterion(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
