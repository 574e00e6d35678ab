use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("coordinate error: {0}")]
    Coordinate(String),
    #[error("state error: {0}")]
    State(String),
    #[error("archive error: {0}")]
    Archive(String),
    #[error("policy error: {0}")]
    Policy(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
