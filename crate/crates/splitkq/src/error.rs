use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] splitkq_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad container: {0}")]
    Container(String),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Process exit status for this error: 2 for invalid input, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Core(_) | Error::Container(_) | Error::Usage(_) => 2,
        }
    }
}
