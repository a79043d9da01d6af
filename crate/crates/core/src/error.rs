use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value {value} at ({row}, {col}) does not fit in 4 bits")]
    NibbleOutOfRange { row: usize, col: usize, value: u8 },
    #[error("invalid quantization parameters: {0}")]
    InvalidParams(String),
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("block needs {required} {resource} but an SM only has {available}")]
    Infeasible {
        resource: &'static str,
        required: u64,
        available: u64,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no {missing} record for shape m={m} n={n} k={k}")]
    MissingPair {
        m: usize,
        n: usize,
        k: usize,
        missing: &'static str,
    },
    #[error("fixture integrity: {0}")]
    Fixture(String),
}
