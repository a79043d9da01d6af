//! `W4PK` packed-weight container.
//!
//! Little-endian layout:
//!
//! | field      | type                      | count                          |
//! |------------|---------------------------|--------------------------------|
//! | magic      | `b"W4PK"`                 | 4 bytes                        |
//! | version    | u16 (= 1)                 | 1                              |
//! | k, n, g    | u32                       | 3                              |
//! | scales     | f32, row-major            | `(k/g) * n`                    |
//! | zeros      | u32, 8 nibbles per word   | `ceil((k/g) / 8) * n`          |
//! | weights    | u32, 8 nibbles per word   | `(k/8) * n`                    |
//!
//! Zero points are packed like the weights: word `(r, j)` holds groups
//! `8r..8r+8` of column `j`, lowest nibble first, padded with zeros.

use std::fs;
use std::path::Path;

use splitkq_core::quant::NIBBLES_PER_WORD;
use splitkq_core::{PackedWeightMatrix, QuantParams};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"W4PK";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

fn zero_rows(groups: usize) -> usize {
    groups.div_ceil(NIBBLES_PER_WORD)
}

/// Size in bytes of the container for a `k x n` matrix with group size `g`.
pub fn encoded_len(k: usize, n: usize, group_size: usize) -> usize {
    let groups = k / group_size;
    HEADER_LEN + 4 * (groups * n + zero_rows(groups) * n + (k / NIBBLES_PER_WORD) * n)
}

pub fn encode(p: &PackedWeightMatrix) -> Vec<u8> {
    let (k, n) = (p.k(), p.n());
    let params = p.params();
    let groups = params.groups();
    let mut out = Vec::with_capacity(encoded_len(k, n, params.group_size()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [k, n, params.group_size()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for s in params.scales() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for r in 0..zero_rows(groups) {
        for col in 0..n {
            let mut word = 0u32;
            for t in 0..NIBBLES_PER_WORD {
                let g = r * NIBBLES_PER_WORD + t;
                if g < groups {
                    word |= (params.zero(g, col) as u32) << (4 * t);
                }
            }
            out.extend_from_slice(&word.to_le_bytes());
        }
    }
    for w in p.words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Container(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u32s(&mut self, count: usize, what: &str) -> Result<Vec<u32>> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| Error::Container(format!("{what} too large")))?, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<PackedWeightMatrix> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Container("magic bytes are not W4PK".into()));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let k = r.u32("k")? as usize;
    let n = r.u32("n")? as usize;
    let group_size = r.u32("group_size")? as usize;
    if k == 0 || n == 0 || group_size == 0 || k % group_size != 0 || k % NIBBLES_PER_WORD != 0 {
        return Err(Error::Container(format!(
            "inconsistent header k={k} n={n} group_size={group_size}"
        )));
    }
    let groups = k / group_size;
    let scales: Vec<f32> = r
        .u32s(groups * n, "scales")?
        .into_iter()
        .map(f32::from_bits)
        .collect();
    let zero_words = r.u32s(zero_rows(groups) * n, "zeros")?;
    let mut zeros = vec![0u8; groups * n];
    for g in 0..groups {
        for col in 0..n {
            let word = zero_words[(g / NIBBLES_PER_WORD) * n + col];
            zeros[g * n + col] = ((word >> (4 * (g % NIBBLES_PER_WORD))) & 0xF) as u8;
        }
    }
    let words = r.u32s((k / NIBBLES_PER_WORD) * n, "weights")?;
    if r.pos != bytes.len() {
        return Err(Error::Container(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let params = QuantParams::new(group_size, groups, n, scales, zeros)
        .map_err(|e| Error::Container(e.to_string()))?;
    PackedWeightMatrix::from_parts(k, n, words, params).map_err(|e| Error::Container(e.to_string()))
}

pub fn write_file(path: &Path, p: &PackedWeightMatrix) -> Result<usize> {
    let bytes = encode(p);
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

pub fn read_file(path: &Path) -> Result<PackedWeightMatrix> {
    decode(&fs::read(path)?)
}
