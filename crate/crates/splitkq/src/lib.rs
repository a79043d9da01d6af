//! Host-side companion to `splitkq-core`: multi-threaded kernel execution,
//! the `W4PK` container format, hardware profile files, wall-clock
//! benchmarks and the `splitkq` command-line tool.

pub mod bench;
pub mod cli;
pub mod container;
pub mod error;
pub mod exec;
pub mod profiles;
pub mod random;

pub use error::{Error, Result};
pub use exec::{dp_gemm, splitk_gemm, ThreadPool};
pub use splitkq_core as core;
