use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pole at x = {x}")]
    Pole { x: f64 },

    #[error("division by a vanishing infinite product (denominator {value:e})")]
    DivisionByZeroProduct { value: f64 },

    #[error("argument z = {z} lies outside the series radius {radius} and acceleration is not available")]
    OutsideRadius { z: f64, radius: f64 },

    #[error("epsilon table did not stabilise within {terms} terms (last delta {last_delta:e})")]
    AccelerationFailed { terms: usize, last_delta: f64 },

    #[error("translation point s = {s} exceeds t = {t}")]
    InvalidTranslation { s: f64, t: f64 },

    #[error("q-derivative requested at x = 0")]
    ZeroPoint,

    #[error("Jackson sum is not absolutely convergent (last increment {last:e})")]
    NonAbsolutelyConvergent { last: f64 },

    #[error("{op} did not reach tolerance within {terms} terms")]
    Truncated { op: &'static str, terms: usize },

    #[error("inverse-problem denominator for mode {mode} is {value:e}, below the floor {floor:e}")]
    DenominatorUnderflow { mode: usize, value: f64, floor: f64 },

    #[error("time grid too short: no node reaches the residual tolerance")]
    InsufficientGrid,

    #[error("the spectral model has no basis attached")]
    NoBasis,

    #[error("mode {mode}: {source}")]
    Mode { mode: usize, source: Box<Error> },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn mode(mode: usize, source: Error) -> Self {
        Error::Mode { mode, source: Box::new(source) }
    }

    /// Short machine-friendly name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidContext(_) => "InvalidContext",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Pole { .. } => "PoleError",
            Error::DivisionByZeroProduct { .. } => "DivisionByZeroProduct",
            Error::OutsideRadius { .. } => "OutsideRadius",
            Error::AccelerationFailed { .. } => "AccelerationFailed",
            Error::InvalidTranslation { .. } => "InvalidTranslation",
            Error::ZeroPoint => "ZeroPoint",
            Error::NonAbsolutelyConvergent { .. } => "NonAbsolutelyConvergent",
            Error::Truncated { .. } => "Truncated",
            Error::DenominatorUnderflow { .. } => "DenominatorUnderflow",
            Error::InsufficientGrid => "InsufficientGrid",
            Error::NoBasis => "NoBasis",
            Error::Mode { source, .. } => match **source {
                Error::AccelerationFailed { .. } => "ModeDiverged",
                _ => source.kind(),
            },
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}
