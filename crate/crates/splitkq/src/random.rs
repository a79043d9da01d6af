//! Seeded problem generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitkq_core::quant::DEFAULT_GROUP_SIZE;
use splitkq_core::{quantize_reference, DenseMatrix, PackedWeightMatrix};

use crate::error::Result;

pub const DEFAULT_SEED: u64 = 42;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values in `[-1, 1]`.
pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Result<DenseMatrix> {
    Ok(DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0f32..=1.0))?)
}

/// Random dense weights quantized with [`quantize_reference`].
pub fn quantized_weights(rng: &mut impl Rng, k: usize, n: usize, group_size: usize) -> Result<PackedWeightMatrix> {
    let w = uniform_matrix(rng, k, n)?;
    Ok(quantize_reference(&w, group_size)?)
}

/// The default group size if it divides `k`, otherwise 8.
pub fn group_size_for(k: usize) -> usize {
    if k % DEFAULT_GROUP_SIZE == 0 {
        DEFAULT_GROUP_SIZE
    } else {
        8
    }
}

/// Activations `m x k` and packed weights `k x n` from one seed.
pub fn problem(seed: u64, m: usize, n: usize, k: usize) -> Result<(DenseMatrix, PackedWeightMatrix)> {
    let mut rng = rng(seed);
    let b = quantized_weights(&mut rng, k, n, group_size_for(k))?;
    let a = uniform_matrix(&mut rng, m, k)?;
    Ok((a, b))
}
