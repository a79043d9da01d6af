//! Int4 weight packing and group-wise dequantization.
//!
//! Weights are a `k x n` matrix of unsigned 4-bit values packed eight to a
//! `u32` along `k`: word `(i, j)` holds rows `8i..8i+8` of column `j`, with
//! row `8i + t` in bits `[4t, 4t + 4)`. Every `group_size` consecutive rows
//! of a column share one `(scale, zero)` pair and dequantize as
//! `scale * (q - zero)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const NIBBLES_PER_WORD: usize = 8;
pub const NIBBLE_MAX: u8 = 15;
pub const DEFAULT_GROUP_SIZE: usize = 128;

/// Smallest scale `quantize_reference` will emit.
pub const SCALE_FLOOR: f32 = 1e-8;

/// Unpacked `k x n` matrix of 4-bit values, one per byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Int4Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl Int4Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} int4 matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > NIBBLE_MAX) {
            return Err(Error::NibbleOutOfRange {
                row: pos / cols,
                col: pos % cols,
                value: data[pos],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }
}

/// Per-group scales and zero points, both laid out `(k / group_size) x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantParams {
    group_size: usize,
    groups: usize,
    cols: usize,
    scales: Vec<f32>,
    zeros: Vec<u8>,
}

impl QuantParams {
    pub fn new(
        group_size: usize,
        groups: usize,
        cols: usize,
        scales: Vec<f32>,
        zeros: Vec<u8>,
    ) -> Result<Self> {
        if group_size == 0 || groups == 0 || cols == 0 {
            return Err(Error::InvalidParams(format!(
                "group_size, group count and columns must be positive \
                 (got {group_size}, {groups}, {cols})"
            )));
        }
        let len = groups * cols;
        if scales.len() != len || zeros.len() != len {
            return Err(Error::Dimension(format!(
                "expected {len} scales and zeros, got {} and {}",
                scales.len(),
                zeros.len()
            )));
        }
        if let Some(pos) = scales.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "scale at ({}, {}) must be finite and positive, got {}",
                pos / cols,
                pos % cols,
                scales[pos]
            )));
        }
        if let Some(pos) = zeros.iter().position(|&z| z > NIBBLE_MAX) {
            return Err(Error::InvalidParams(format!(
                "zero point at ({}, {}) exceeds 15: {}",
                pos / cols,
                pos % cols,
                zeros[pos]
            )));
        }
        Ok(Self {
            group_size,
            groups,
            cols,
            scales,
            zeros,
        })
    }

    /// One `(scale, zero)` pair for every group of every column.
    pub fn uniform(k: usize, n: usize, group_size: usize, scale: f32, zero: u8) -> Result<Self> {
        if group_size == 0 || k % group_size != 0 {
            return Err(Error::Dimension(format!(
                "group_size {group_size} must divide k = {k}"
            )));
        }
        let groups = k / group_size;
        Self::new(
            group_size,
            groups,
            n,
            vec![scale; groups * n],
            vec![zero; groups * n],
        )
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn zeros(&self) -> &[u8] {
        &self.zeros
    }

    #[inline]
    pub fn scale(&self, group: usize, col: usize) -> f32 {
        self.scales[group * self.cols + col]
    }

    #[inline]
    pub fn zero(&self, group: usize, col: usize) -> u8 {
        self.zeros[group * self.cols + col]
    }

    fn check_shape(&self, k: usize, n: usize) -> Result<()> {
        if k % self.group_size != 0 {
            return Err(Error::Dimension(format!(
                "group_size {} must divide k = {k}",
                self.group_size
            )));
        }
        if self.groups != k / self.group_size || self.cols != n {
            return Err(Error::Dimension(format!(
                "params cover {}x{} groups, weights need {}x{n}",
                self.groups,
                self.cols,
                k / self.group_size
            )));
        }
        Ok(())
    }
}

/// Packed int4 weights together with their dequantization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedWeightMatrix {
    k: usize,
    n: usize,
    words: Vec<u32>,
    params: QuantParams,
}

impl PackedWeightMatrix {
    /// Assembles a matrix from already-packed words, e.g. when decoding a
    /// container file.
    pub fn from_parts(k: usize, n: usize, words: Vec<u32>, params: QuantParams) -> Result<Self> {
        check_k(k)?;
        if n == 0 {
            return Err(Error::Dimension("n must be positive".into()));
        }
        params.check_shape(k, n)?;
        if words.len() != (k / NIBBLES_PER_WORD) * n {
            return Err(Error::Dimension(format!(
                "{k}x{n} weights need {} words, got {}",
                (k / NIBBLES_PER_WORD) * n,
                words.len()
            )));
        }
        Ok(Self {
            k,
            n,
            words,
            params,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn params(&self) -> &QuantParams {
        &self.params
    }

    #[inline]
    pub fn nibble(&self, row: usize, col: usize) -> u8 {
        let word = self.words[(row / NIBBLES_PER_WORD) * self.n + col];
        ((word >> (4 * (row % NIBBLES_PER_WORD))) & 0xF) as u8
    }

    /// Dequantized value of a single weight.
    #[inline]
    pub fn dequant_at(&self, row: usize, col: usize) -> f32 {
        let group = row / self.params.group_size;
        let q = self.nibble(row, col) as i32;
        let z = self.params.zero(group, col) as i32;
        self.params.scale(group, col) * (q - z) as f32
    }

    /// Dequantizes the `rows x cols` window starting at `(row0, col0)` into
    /// `out` (row stride `stride`). Positions past the matrix edge read as
    /// zero.
    pub fn dequant_tile(
        &self,
        row0: usize,
        col0: usize,
        rows: usize,
        cols: usize,
        out: &mut [f32],
        stride: usize,
    ) {
        debug_assert!(cols <= stride && out.len() >= rows * stride);
        for r in 0..rows {
            let dst = &mut out[r * stride..r * stride + cols];
            let row = row0 + r;
            if row >= self.k {
                dst.fill(0.0);
                continue;
            }
            let group = row / self.params.group_size;
            let shift = 4 * (row % NIBBLES_PER_WORD);
            let words = &self.words[(row / NIBBLES_PER_WORD) * self.n..][..self.n];
            let scales = &self.params.scales[group * self.n..][..self.n];
            let zeros = &self.params.zeros[group * self.n..][..self.n];
            for (c, slot) in dst.iter_mut().enumerate() {
                let col = col0 + c;
                *slot = if col < self.n {
                    let q = ((words[col] >> shift) & 0xF) as i32;
                    scales[col] * (q - zeros[col] as i32) as f32
                } else {
                    0.0
                };
            }
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 || k % NIBBLES_PER_WORD != 0 {
        return Err(Error::Dimension(format!(
            "k = {k} must be a positive multiple of {NIBBLES_PER_WORD}"
        )));
    }
    Ok(())
}

/// Packs `q` eight nibbles per word along `k`, lowest nibble first.
pub fn pack_int4(q: &Int4Matrix, params: QuantParams) -> Result<PackedWeightMatrix> {
    let (k, n) = (q.rows, q.cols);
    check_k(k)?;
    params.check_shape(k, n)?;
    let mut words = vec![0u32; (k / NIBBLES_PER_WORD) * n];
    for row in 0..k {
        let shift = 4 * (row % NIBBLES_PER_WORD);
        let base = (row / NIBBLES_PER_WORD) * n;
        for col in 0..n {
            words[base + col] |= (q.get(row, col) as u32) << shift;
        }
    }
    PackedWeightMatrix::from_parts(k, n, words, params)
}

pub fn unpack_int4(p: &PackedWeightMatrix) -> Int4Matrix {
    let mut data = Vec::with_capacity(p.k * p.n);
    for row in 0..p.k {
        for col in 0..p.n {
            data.push(p.nibble(row, col));
        }
    }
    Int4Matrix {
        rows: p.k,
        cols: p.n,
        data,
    }
}

/// Materializes the full dequantized `k x n` matrix.
pub fn dequantize(p: &PackedWeightMatrix) -> DenseMatrix {
    let mut data = vec![0.0f32; p.k * p.n];
    p.dequant_tile(0, 0, p.k, p.n, &mut data, p.n);
    DenseMatrix::from_raw(p.k, p.n, data)
}

/// Round-to-nearest asymmetric quantization, used to build test fixtures
/// and benchmark inputs.
///
/// Each group of each column is mapped onto `[0, 15]` using the group's
/// range widened to include zero.
pub fn quantize_reference(w: &DenseMatrix, group_size: usize) -> Result<PackedWeightMatrix> {
    let (k, n) = (w.rows(), w.cols());
    check_k(k)?;
    if group_size == 0 || k % group_size != 0 {
        return Err(Error::Dimension(format!(
            "group_size {group_size} must divide k = {k}"
        )));
    }
    let groups = k / group_size;
    let mut scales = vec![0.0f32; groups * n];
    let mut zeros = vec![0u8; groups * n];
    let mut q = vec![0u8; k * n];
    for g in 0..groups {
        let rows = g * group_size..(g + 1) * group_size;
        for col in 0..n {
            let (lo, hi) = rows.clone().fold((0.0f32, 0.0f32), |(lo, hi), r| {
                let v = w.get(r, col);
                (lo.min(v), hi.max(v))
            });
            let scale = ((hi - lo) / NIBBLE_MAX as f32).max(SCALE_FLOOR);
            let zero = libm::roundf(-lo / scale).clamp(0.0, NIBBLE_MAX as f32);
            scales[g * n + col] = scale;
            zeros[g * n + col] = zero as u8;
            for r in rows.clone() {
                let v = libm::roundf(w.get(r, col) / scale) + zero;
                q[r * n + col] = v.clamp(0.0, NIBBLE_MAX as f32) as u8;
            }
        }
    }
    let params = QuantParams::new(group_size, groups, n, scales, zeros)?;
    pack_int4(&Int4Matrix::from_vec(k, n, q)?, params)
}
