//! Reference kernels and an analytic execution model for fused int4
//! dequantize + SplitK GEMM.
//!
//! Everything here is `no_std` (with `alloc`). Thread pools, timing, file
//! formats and the command-line tool live in the `splitkq` crate.

#![no_std]

extern crate alloc;

pub mod bench;
pub mod error;
pub mod execmodel;
pub mod gemm;
pub mod matrix;
pub mod quant;

pub use error::{Error, Result};
pub use gemm::{
    compute_offsets, dp_gemm, dp_gemm_on, grid_size, oracle_gemm, splitk_gemm, splitk_gemm_on,
    BlockTask, Executor, KernelConfig, Permuted, Sequential,
};
pub use matrix::DenseMatrix;
pub use quant::{dequantize, pack_int4, quantize_reference, unpack_int4, Int4Matrix, PackedWeightMatrix, QuantParams};
