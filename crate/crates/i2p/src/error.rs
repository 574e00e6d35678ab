use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt tensor `{tensor}`: stored crc {stored:08x}, computed {computed:08x}")]
    Corruption { tensor: String, stored: u32, computed: u32 },
    #[error("{source_name}:{line}:{column}: {msg}")]
    Parse { source_name: String, line: usize, column: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] i2p_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(source_name: &str, line: usize, column: usize, msg: impl Into<String>) -> Self {
        Self::Parse { source_name: source_name.into(), line, column, msg: msg.into() }
    }
}

macro_rules! format_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Format(format!($($arg)*))
    };
}
pub(crate) use format_err;

macro_rules! usage {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Usage(format!($($arg)*)))
    };
}
pub(crate) use usage;
