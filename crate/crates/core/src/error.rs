use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    InvalidArgument(String),
    UnknownClass { code: String, valid: String },
    Shape(String),
    InvalidSample(String),
    InvalidSpec(String),
    InvalidTarget(String),
    MissingDomain(String),
    MissingClass(String),
    FingerprintMismatch { expected: String, found: String },
    NonFiniteLoss { epoch: usize, step: usize, lr: f64 },
    Format(String),
    Data(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::UnknownClass { code, valid } => {
                write!(f, "unknown class `{code}` (valid codes: {valid})")
            }
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::InvalidSample(m) => write!(f, "invalid sample: {m}"),
            Error::InvalidSpec(m) => write!(f, "invalid phantom spec: {m}"),
            Error::InvalidTarget(m) => write!(f, "invalid target: {m}"),
            Error::MissingDomain(m) => write!(f, "missing domain: {m}"),
            Error::MissingClass(m) => write!(f, "missing class: {m}"),
            Error::FingerprintMismatch { expected, found } => {
                write!(f, "taxonomy fingerprint mismatch: expected {expected}, found {found}")
            }
            Error::NonFiniteLoss { epoch, step, lr } => {
                write!(f, "non-finite loss at epoch {epoch}, step {step} (lr {lr:e})")
            }
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
