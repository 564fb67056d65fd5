use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index ({0}, {1}) outside a {2}x{3} grid")]
    IndexOutOfRange(usize, usize, usize, usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{dim} antennas cannot be split into {parts} equal blocks (remainder {remainder})")]
    NonDivisible {
        dim: usize,
        parts: usize,
        remainder: usize,
    },
    #[error("antenna at {distance:.4} m is inside the Fresnel distance {fresnel:.4} m")]
    InsideFresnel { distance: f64, fresnel: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
