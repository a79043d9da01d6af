//! Fused dequantize + GEMM kernels.
//!
//! `C = A * dequant(B)` with `A` an `m x k` activation matrix and `B` a
//! packed int4 `k x n` weight matrix. The output is cut into
//! `block_m x block_n` tiles. The data-parallel kernel gives each tile to a
//! single task that walks the whole `k` range. The SplitK kernel launches
//! `split_k` tasks per tile; task `pid_k` handles k-tiles
//! `pid_k, pid_k + split_k, ...` and folds its partial sum into the shared
//! output with an atomic add.
//!
//! Weights are only ever dequantized one `block_k x block_n` tile at a time
//! inside the k loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::quant::PackedWeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    pub block_m: usize,
    pub block_n: usize,
    pub block_k: usize,
    pub split_k: usize,
    /// Number of workers the host-side executor may use.
    pub workers: usize,
}

impl Default for KernelConfig {
    /// 16/32/64 tiles with split_k = 4. For m = 16, n = 4096 this gives
    /// 128 output tiles.
    fn default() -> Self {
        Self {
            block_m: 16,
            block_n: 32,
            block_k: 64,
            split_k: 4,
            workers: 1,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_m == 0 || self.block_n == 0 || self.block_k == 0 {
            return Err(Error::InvalidConfig("block sizes must be at least 1"));
        }
        if self.split_k == 0 {
            return Err(Error::InvalidConfig("split_k must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1"));
        }
        Ok(())
    }

    pub fn with_split_k(self, split_k: usize) -> Self {
        Self { split_k, ..self }
    }

    /// Same tiles, one task per output tile.
    pub fn data_parallel(self) -> Self {
        self.with_split_k(1)
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }

    pub fn tiles_m(&self, m: usize) -> usize {
        m.div_ceil(self.block_m)
    }

    pub fn tiles_n(&self, n: usize) -> usize {
        n.div_ceil(self.block_n)
    }

    /// Iterations of each task's k loop.
    pub fn num_pid_k(&self, k: usize) -> usize {
        k.div_ceil(self.block_k * self.split_k)
    }
}

/// Number of blocks (tasks) launched: one per output tile per split.
pub fn grid_size(m: usize, n: usize, config: &KernelConfig) -> usize {
    config.tiles_m(m) * config.tiles_n(n) * config.split_k
}

/// One unit of work: output tile `pid`, k-slice `pid_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockTask {
    pub pid: usize,
    pub pid_k: usize,
    pub offs_m: usize,
    pub offs_n: usize,
    pub offs_k: usize,
}

/// Tile offsets for `(pid, pid_k)`; output tiles are numbered row-major.
pub fn compute_offsets(
    pid: usize,
    pid_k: usize,
    m: usize,
    n: usize,
    config: &KernelConfig,
) -> Result<BlockTask> {
    let tiles_n = config.tiles_n(n);
    let tiles = config.tiles_m(m) * tiles_n;
    if pid >= tiles {
        return Err(Error::IndexOutOfRange {
            what: "pid",
            index: pid,
            bound: tiles,
        });
    }
    if pid_k >= config.split_k {
        return Err(Error::IndexOutOfRange {
            what: "pid_k",
            index: pid_k,
            bound: config.split_k,
        });
    }
    Ok(BlockTask {
        pid,
        pid_k,
        offs_m: (pid / tiles_n) * config.block_m,
        offs_n: (pid % tiles_n) * config.block_n,
        offs_k: pid_k * config.block_k,
    })
}

/// Launch order of tasks: `index = pid * split_k + pid_k`.
pub fn task_for_index(index: usize, m: usize, n: usize, config: &KernelConfig) -> Result<BlockTask> {
    compute_offsets(index / config.split_k, index % config.split_k, m, n, config)
}

/// Triple-loop reference product, accumulated in `f64` in ascending k
/// order and rounded once.
pub fn oracle_gemm(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "inner dimensions differ: a is {}x{}, b is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.fill(0.0);
        let a_row = a.row(i);
        for (t, &av) in a_row.iter().enumerate().take(k) {
            let av = av as f64;
            for (slot, &bv) in acc.iter_mut().zip(b.row(t)) {
                *slot += av * bv as f64;
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Ok(DenseMatrix::from_raw(m, n, out))
}

/// Output buffer shared by concurrently running tasks.
///
/// Each element is an `f32` stored as bits in an `AtomicU32`; `add` is a
/// compare-and-swap loop so concurrent partial sums never lose updates.
pub struct AtomicOutput {
    rows: usize,
    cols: usize,
    cells: Vec<AtomicU32>,
}

impl AtomicOutput {
    pub fn zeroed(rows: usize, cols: usize) -> Self {
        let zero = 0.0f32.to_bits();
        Self {
            rows,
            cols,
            cells: (0..rows * cols).map(|_| AtomicU32::new(zero)).collect(),
        }
    }

    #[inline]
    pub fn add(&self, row: usize, col: usize, value: f32) {
        let cell = &self.cells[row * self.cols + col];
        let mut current = cell.load(Ordering::Relaxed);
        loop {
            let next = (f32::from_bits(current) + value).to_bits();
            match cell.compare_exchange_weak(current, next, Ordering::AcqRel, Ordering::Relaxed) {
                Ok(_) => return,
                Err(actual) => current = actual,
            }
        }
    }

    /// Plain store, for kernels where each element has exactly one writer.
    #[inline]
    pub fn store(&self, row: usize, col: usize, value: f32) {
        self.cells[row * self.cols + col].store(value.to_bits(), Ordering::Release);
    }

    pub fn into_matrix(self) -> DenseMatrix {
        let data = self
            .cells
            .into_iter()
            .map(|c| f32::from_bits(c.into_inner()))
            .collect();
        DenseMatrix::from_raw(self.rows, self.cols, data)
    }
}

/// Runs `count` independent jobs, identified by index.
///
/// Implementations may run jobs in any order and on any number of threads;
/// each index must be run exactly once before `run` returns.
pub trait Executor {
    fn run(&self, count: usize, job: &(dyn Fn(usize) + Sync));
}

/// Runs jobs in index order on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run(&self, count: usize, job: &(dyn Fn(usize) + Sync)) {
        (0..count).for_each(job);
    }
}

/// Remaps job indices through a permutation before handing them to `inner`.
///
/// Panics if `order` is not a permutation of `0..count`.
#[derive(Debug, Clone, Copy)]
pub struct Permuted<'a, E> {
    pub order: &'a [usize],
    pub inner: E,
}

impl<E: Executor> Executor for Permuted<'_, E> {
    fn run(&self, count: usize, job: &(dyn Fn(usize) + Sync)) {
        let order = self.order;
        assert!(
            order.len() == count && is_permutation(order),
            "task order must be a permutation of 0..{count}"
        );
        self.inner.run(count, &|i| job(order[i]));
    }
}

fn is_permutation(order: &[usize]) -> bool {
    let mut seen = vec![false; order.len()];
    order.iter().all(|&i| {
        i < seen.len() && !core::mem::replace(&mut seen[i], true)
    })
}

/// Per-task working memory: one A tile, one dequantized B tile and the
/// accumulator.
pub struct TileScratch {
    a: Vec<f32>,
    b: Vec<f32>,
    acc: Vec<f32>,
}

impl TileScratch {
    pub fn new(config: &KernelConfig) -> Self {
        Self {
            a: vec![0.0; config.block_m * config.block_k],
            b: vec![0.0; config.block_k * config.block_n],
            acc: vec![0.0; config.block_m * config.block_n],
        }
    }

    /// Largest number of dequantized weights held at once.
    pub fn weight_capacity(&self) -> usize {
        self.b.len()
    }
}

/// Runs one task's k loop and leaves its partial tile in `scratch.acc`.
/// Returns the valid `(rows, cols)` extent of the tile.
fn run_task(
    a: &DenseMatrix,
    b: &PackedWeightMatrix,
    config: &KernelConfig,
    task: &BlockTask,
    scratch: &mut TileScratch,
) -> (usize, usize) {
    let (m, k, n) = (a.rows(), a.cols(), b.n());
    let (bm, bn, bk) = (config.block_m, config.block_n, config.block_k);
    let rows = bm.min(m - task.offs_m);
    let cols = bn.min(n - task.offs_n);
    let stride_k = bk * config.split_k;
    scratch.acc.fill(0.0);

    let mut k0 = task.offs_k;
    for _ in 0..config.num_pid_k(k) {
        if k0 >= k {
            break;
        }
        let depth = bk.min(k - k0);
        // Masked loads: the tile window past m, n or k is never read, which
        // is the same as loading zeros.
        for i in 0..rows {
            scratch.a[i * bk..i * bk + depth].copy_from_slice(&a.row(task.offs_m + i)[k0..k0 + depth]);
        }
        b.dequant_tile(k0, task.offs_n, depth, cols, &mut scratch.b, bn);
        for i in 0..rows {
            let acc = &mut scratch.acc[i * bn..i * bn + cols];
            for t in 0..depth {
                let av = scratch.a[i * bk + t];
                let b_row = &scratch.b[t * bn..t * bn + cols];
                for (c, &bv) in acc.iter_mut().zip(b_row) {
                    *c += av * bv;
                }
            }
        }
        k0 += stride_k;
    }
    (rows, cols)
}

fn check_operands(a: &DenseMatrix, b: &PackedWeightMatrix, config: &KernelConfig) -> Result<()> {
    config.validate()?;
    if a.cols() != b.k() {
        return Err(Error::Dimension(format!(
            "activations are {}x{} but weights have k = {}",
            a.rows(),
            a.cols(),
            b.k()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Writeback {
    Store,
    AtomicAdd,
}

fn launch<E: Executor + ?Sized>(
    a: &DenseMatrix,
    b: &PackedWeightMatrix,
    config: &KernelConfig,
    executor: &E,
    writeback: Writeback,
) -> DenseMatrix {
    let (m, n) = (a.rows(), b.n());
    let out = AtomicOutput::zeroed(m, n);
    let grid = grid_size(m, n, config);
    executor.run(grid, &|index| {
        let task = task_for_index(index, m, n, config).expect("index below grid size");
        let mut scratch = TileScratch::new(config);
        let (rows, cols) = run_task(a, b, config, &task, &mut scratch);
        for i in 0..rows {
            for j in 0..cols {
                let v = scratch.acc[i * config.block_n + j];
                match writeback {
                    Writeback::Store => out.store(task.offs_m + i, task.offs_n + j, v),
                    Writeback::AtomicAdd => out.add(task.offs_m + i, task.offs_n + j, v),
                }
            }
        }
    });
    out.into_matrix()
}

/// Data-parallel fused kernel: one task per output tile, `split_k` must be 1.
pub fn dp_gemm_on<E: Executor + ?Sized>(
    a: &DenseMatrix,
    b: &PackedWeightMatrix,
    config: &KernelConfig,
    executor: &E,
) -> Result<DenseMatrix> {
    check_operands(a, b, config)?;
    if config.split_k != 1 {
        return Err(Error::InvalidConfig("data-parallel kernel requires split_k = 1"));
    }
    Ok(launch(a, b, config, executor, Writeback::Store))
}

/// SplitK fused kernel with atomic reduction of partial tiles.
pub fn splitk_gemm_on<E: Executor + ?Sized>(
    a: &DenseMatrix,
    b: &PackedWeightMatrix,
    config: &KernelConfig,
    executor: &E,
) -> Result<DenseMatrix> {
    check_operands(a, b, config)?;
    Ok(launch(a, b, config, executor, Writeback::AtomicAdd))
}

/// [`dp_gemm_on`] on the calling thread.
pub fn dp_gemm(a: &DenseMatrix, b: &PackedWeightMatrix, config: &KernelConfig) -> Result<DenseMatrix> {
    dp_gemm_on(a, b, config, &Sequential)
}

/// [`splitk_gemm_on`] on the calling thread.
pub fn splitk_gemm(a: &DenseMatrix, b: &PackedWeightMatrix, config: &KernelConfig) -> Result<DenseMatrix> {
    splitk_gemm_on(a, b, config, &Sequential)
}

/// Elementwise tolerance used when comparing a kernel against the oracle:
/// `1e-3 * max(1, maxabs(result))`.
pub fn equivalence_tolerance(result: &DenseMatrix) -> f32 {
    1e-3 * result.max_abs().max(1.0)
}
