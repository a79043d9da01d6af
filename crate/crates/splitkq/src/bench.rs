//! Wall-clock benchmarks of the two fused kernels and CSV output.

use std::io::{self, Write};
use std::time::Instant;

use splitkq_core::bench::{speedup_table, BenchRecord, Method, SpeedupTable};
use splitkq_core::gemm::{equivalence_tolerance, oracle_gemm, KernelConfig};
use splitkq_core::{dequantize, DenseMatrix, PackedWeightMatrix};

use crate::error::{Error, Result};
use crate::exec;
use crate::random::{self, DEFAULT_SEED};

pub const HOST: &str = "host";
pub const DEFAULT_M: [usize; 2] = [1, 16];
pub const DEFAULT_NK: [usize; 4] = [512, 1024, 2048, 4096];
pub const LARGE_NK: [usize; 2] = [8192, 16384];
pub const CSV_HEADER: &str = "gpu_or_host,m,n,k,method,split_k,latency_us,tflops,speedup";

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            reps: 5,
            warmup: 2,
            seed: DEFAULT_SEED,
        }
    }
}

/// Every `(m, n, k)` with `n == k`, m-major.
pub fn shape_grid(ms: &[usize], nks: &[usize]) -> Vec<(usize, usize, usize)> {
    ms.iter()
        .flat_map(|&m| nks.iter().map(move |&nk| (m, nk, nk)))
        .collect()
}

pub fn default_shapes() -> Vec<(usize, usize, usize)> {
    shape_grid(&DEFAULT_M, &DEFAULT_NK)
}

/// Median wall-clock seconds of `reps` timed calls after `warmup` untimed
/// ones.
pub fn time_median<T>(reps: usize, warmup: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    for _ in 0..warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        std::hint::black_box(f()?);
        samples.push(start.elapsed().as_secs_f64().max(1e-9));
    }
    splitkq_core::bench::median(&mut samples).ok_or_else(|| Error::Usage("reps must be at least 1".into()))
}

fn check_options(opts: &BenchOptions) -> Result<()> {
    if opts.reps == 0 {
        return Err(Error::Usage("--reps must be at least 1".into()));
    }
    Ok(())
}

fn time_kernel(
    a: &DenseMatrix,
    b: &PackedWeightMatrix,
    config: &KernelConfig,
    method: Method,
    opts: &BenchOptions,
) -> Result<BenchRecord> {
    let latency = match method {
        Method::DataParallel => time_median(opts.reps, opts.warmup, || exec::dp_gemm(a, b, config))?,
        Method::SplitK => time_median(opts.reps, opts.warmup, || exec::splitk_gemm(a, b, config))?,
    };
    Ok(BenchRecord::from_latency(
        HOST,
        (a.rows(), b.n(), b.k()),
        method,
        config.split_k,
        latency,
        opts.reps,
    ))
}

/// Times both kernels on every shape; records come in
/// `(data_parallel, split_k)` pairs per shape.
pub fn run_grid(
    shapes: &[(usize, usize, usize)],
    config: &KernelConfig,
    opts: &BenchOptions,
) -> Result<Vec<BenchRecord>> {
    if shapes.is_empty() {
        return Err(Error::Usage("no shapes to benchmark".into()));
    }
    check_options(opts)?;
    config.validate()?;
    let mut records = Vec::with_capacity(2 * shapes.len());
    for &(m, n, k) in shapes {
        let (a, b) = random::problem(opts.seed, m, n, k)?;
        records.push(time_kernel(&a, &b, &config.data_parallel(), Method::DataParallel, opts)?);
        records.push(time_kernel(&a, &b, config, Method::SplitK, opts)?);
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub record: BenchRecord,
    pub max_abs_err: f32,
    pub tolerance: f32,
}

impl SweepPoint {
    pub fn within_tolerance(&self) -> bool {
        self.max_abs_err <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    /// Data-parallel baseline for the same shape and tiles.
    pub baseline: BenchRecord,
    pub points: Vec<SweepPoint>,
    /// Split factor with the highest measured TFLOPS.
    pub best_split: usize,
}

/// Times SplitK at each split factor with tiles and workers held fixed,
/// re-checking every result against the oracle.
pub fn sweep_splitk(
    (m, n, k): (usize, usize, usize),
    split_values: &[usize],
    config: &KernelConfig,
    opts: &BenchOptions,
) -> Result<SweepReport> {
    if split_values.is_empty() {
        return Err(Error::Usage("no split values to sweep".into()));
    }
    if split_values.contains(&0) {
        return Err(Error::Usage("split values must be at least 1".into()));
    }
    check_options(opts)?;
    config.validate()?;
    let (a, b) = random::problem(opts.seed, m, n, k)?;
    let oracle = oracle_gemm(&a, &dequantize(&b))?;
    let baseline = time_kernel(&a, &b, &config.data_parallel(), Method::DataParallel, opts)?;
    let mut points = Vec::with_capacity(split_values.len());
    for &split in split_values {
        let cfg = config.with_split_k(split);
        let out = exec::splitk_gemm(&a, &b, &cfg)?;
        let (max_abs_err, _, _) = out.max_abs_diff(&oracle)?;
        points.push(SweepPoint {
            record: time_kernel(&a, &b, &cfg, Method::SplitK, opts)?,
            max_abs_err,
            tolerance: equivalence_tolerance(&out),
        });
    }
    let best_split = points
        .iter()
        .max_by(|x, y| x.record.tflops.total_cmp(&y.record.tflops))
        .map(|p| p.record.split_k)
        .expect("at least one point");
    Ok(SweepReport {
        baseline,
        points,
        best_split,
    })
}

/// Formats `x` with `digits` significant digits in plain decimal notation.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Speedup for each record: SplitK rows always get their pair's ratio,
/// data-parallel rows only when exactly one SplitK row shares the shape.
fn record_speedups(records: &[BenchRecord]) -> Vec<Option<f64>> {
    let ratio = |sk: &BenchRecord| {
        records
            .iter()
            .find(|r| r.method == Method::DataParallel && r.shape() == sk.shape())
            .map(|dp| sk.tflops / dp.tflops)
    };
    records
        .iter()
        .map(|r| match r.method {
            Method::SplitK => ratio(r),
            Method::DataParallel => {
                let mut pairs = records
                    .iter()
                    .filter(|s| s.method == Method::SplitK && s.shape() == r.shape());
                match (pairs.next(), pairs.next()) {
                    (Some(sk), None) => ratio(sk),
                    _ => None,
                }
            }
        })
        .collect()
}

pub fn write_csv(mut w: impl Write, records: &[BenchRecord]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for (r, speedup) in records.iter().zip(record_speedups(records)) {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.3},{},{}",
            r.source,
            r.m,
            r.n,
            r.k,
            r.method.as_str(),
            r.split_k,
            r.median_latency_s * 1e6,
            format_sig(r.tflops, 4),
            speedup.map(|s| format!("{s:.4}")).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Console layout: one line per shape with both throughputs side by side.
pub fn write_table(mut w: impl Write, table: &SpeedupTable) -> io::Result<()> {
    writeln!(
        w,
        "{:>4} {:>6} {:>6} {:>7} {:>16} {:>22} {:>8}",
        "M", "N", "K", "split_k", "SplitK [TFLOPS]", "Data Parallel [TFLOPS]", "speedup"
    )?;
    for r in &table.rows {
        writeln!(
            w,
            "{:>4} {:>6} {:>6} {:>7} {:>16} {:>22} {:>7.3}x",
            r.m,
            r.n,
            r.k,
            r.split_k,
            format_sig(r.splitk_tflops, 4),
            format_sig(r.dp_tflops, 4),
            r.speedup
        )?;
    }
    if let Some(g) = table.average_gain {
        writeln!(w, "average gain: {:+.1}%", 100.0 * g)?;
    }
    Ok(())
}

pub fn summarize(records: &[BenchRecord]) -> Result<SpeedupTable> {
    Ok(speedup_table(records)?)
}
