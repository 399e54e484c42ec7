use thiserror::Error;

/// Errors produced across the library. The CLI maps these onto process exit
/// codes: usage errors are caught by the argument parser, `Parse`/`Corrupt`/IO
/// map to 3, configuration violations map to 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("index {index} out of range (count {count})")]
    OutOfRange { index: usize, count: usize },

    #[error("no temporal data: stream contains no P-frames")]
    NoTemporalData,

    #[error("kappa undefined: expected agreement is 1 but observed agreement is not")]
    UndefinedKappa,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 4,
            Error::Io(_) => 3,
            Error::Parse { .. } | Error::CorruptStream(_) => 3,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
