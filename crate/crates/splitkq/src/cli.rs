//! `splitkq` command-line front end.
//!
//! Exit status: 0 on success, 1 when a correctness check fails, 2 for
//! usage or input errors, 3 for I/O errors.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use splitkq_core::execmodel::{
    compare_decompositions, compare_decompositions_at, occupancy_limit, BlockResources, HardwareProfile,
    Occupancy, WaveReport, PROFILED_DATA_PARALLEL, PROFILED_SHAPE, PROFILED_SPLITK,
};
use splitkq_core::gemm::{equivalence_tolerance, grid_size, oracle_gemm, KernelConfig};
use splitkq_core::quant::{DEFAULT_GROUP_SIZE, NIBBLES_PER_WORD};
use splitkq_core::{bench::Method, dequantize, quantize_reference, DenseMatrix, PackedWeightMatrix};

use crate::bench::{self, BenchOptions};
use crate::error::{Error, Result};
use crate::{container, exec, profiles, random};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "splitkq", version, about = "Fused int4 dequantize + SplitK GEMM reference and GPU wave model")]
pub struct Cli {
    /// Seed for all generated inputs.
    #[arg(long, global = true, default_value_t = random::DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads for the kernels [default: available parallelism].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, default_value_t = 16)]
    pub block_m: usize,
    #[arg(long, global = true, default_value_t = 32)]
    pub block_n: usize,
    #[arg(long, global = true, default_value_t = 64)]
    pub block_k: usize,
    #[arg(long, global = true, default_value_t = 4)]
    pub split_k: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantize weights and write a W4PK container.
    Pack(PackArgs),
    /// Check SplitK results from a container against the dense oracle.
    Verify(VerifyArgs),
    /// Run one fused GEMM.
    Gemm(GemmArgs),
    /// Time data-parallel vs SplitK over a shape grid.
    Bench(BenchArgs),
    /// Grid, occupancy and wave analysis for a GPU profile.
    Model(ModelArgs),
}

#[derive(Debug, Args)]
pub struct PackArgs {
    /// Random k x n weights in [-1, 1].
    #[arg(long, num_args = 2, value_names = ["K", "N"], conflicts_with = "input", required_unless_present = "input")]
    pub random: Option<Vec<usize>>,
    /// Text matrix with k rows of n comma- or space-separated values.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GROUP_SIZE)]
    pub group_size: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// W4PK container to check.
    pub packed: PathBuf,
    /// Rows of the random activation matrix.
    #[arg(long, default_value_t = 16)]
    pub m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16])]
    pub splits: Vec<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kernel {
    Splitk,
    Dp,
}

#[derive(Debug, Args)]
pub struct GemmArgs {
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    pub packed: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["K", "N"])]
    pub random: Option<Vec<usize>>,
    #[arg(long, default_value_t = 16)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = Kernel::Splitk)]
    pub method: Kernel,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Compare against the dense oracle.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_M)]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_NK)]
    pub nk: Vec<usize>,
    /// Also run n = k = 8192 and 16384.
    #[arg(long)]
    pub large: bool,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Sweep these split factors per shape instead of a single --split-k.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Built-in name (a100-40, a100-80, h100), a profile file, or a name
    /// found in $SPLITKQ_PROFILE_DIR.
    #[arg(long, default_value = "a100-80")]
    pub profile: String,
    #[arg(long, default_value_t = PROFILED_SHAPE.0)]
    pub m: usize,
    #[arg(long, default_value_t = PROFILED_SHAPE.1)]
    pub n: usize,
    #[arg(long, default_value_t = PROFILED_SHAPE.2)]
    pub k: usize,
    #[arg(long, default_value_t = PROFILED_SPLITK.registers_per_thread)]
    pub regs_splitk: u32,
    #[arg(long, default_value_t = PROFILED_DATA_PARALLEL.registers_per_thread)]
    pub regs_dp: u32,
    #[arg(long, default_value_t = BlockResources::DEFAULT_THREADS)]
    pub threads: u32,
    /// Shared memory per SplitK block in bytes (0 = not modeled).
    #[arg(long, default_value_t = 0)]
    pub smem_splitk: u32,
    /// Shared memory per data-parallel block in bytes (0 = not modeled).
    #[arg(long, default_value_t = 0)]
    pub smem_dp: u32,
    /// Reproduce the published m=16, n=k=4096 profiling case.
    #[arg(long)]
    pub paper_case: bool,
}

impl Cli {
    fn kernel_config(&self) -> Result<KernelConfig> {
        let cfg = KernelConfig {
            block_m: self.block_m,
            block_n: self.block_n,
            block_k: self.block_k,
            split_k: self.split_k,
            workers: self.workers.unwrap_or_else(exec::available_workers),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Pack(args) => cmd_pack(cli, args, out),
        Command::Verify(args) => cmd_verify(cli, args, out),
        Command::Gemm(args) => cmd_gemm(cli, args, out),
        Command::Bench(args) => cmd_bench(cli, args, out),
        Command::Model(args) => cmd_model(cli, args, out),
    }
}

fn read_text_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)?;
    let mut rows = 0;
    let mut cols = None;
    let mut data = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = data.len();
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::Usage(format!("{}:{}: not a number: {tok:?}", path.display(), i + 1)))?;
            data.push(v);
        }
        let width = data.len() - before;
        if *cols.get_or_insert(width) != width {
            return Err(Error::Usage(format!(
                "{}:{}: expected {} values, found {width}",
                path.display(),
                i + 1,
                cols.unwrap()
            )));
        }
        rows += 1;
    }
    Ok(DenseMatrix::from_vec(rows, cols.unwrap_or(0), data)?)
}

fn check_pack_dims(k: usize, n: usize, group_size: usize) -> Result<()> {
    if k == 0 || n == 0 || k % NIBBLES_PER_WORD != 0 {
        return Err(Error::Usage(format!(
            "k must be a positive multiple of {NIBBLES_PER_WORD} and n positive (got k={k}, n={n})"
        )));
    }
    if group_size == 0 || k % group_size != 0 {
        return Err(Error::Usage(format!(
            "group size {group_size} must divide k = {k}"
        )));
    }
    Ok(())
}

fn cmd_pack(cli: &Cli, args: &PackArgs, out: &mut dyn Write) -> Result<i32> {
    let weights = match (&args.random, &args.input) {
        (Some(dims), _) => {
            let (k, n) = (dims[0], dims[1]);
            check_pack_dims(k, n, args.group_size)?;
            random::uniform_matrix(&mut random::rng(cli.seed), k, n)?
        }
        (None, Some(path)) => read_text_matrix(path)?,
        (None, None) => unreachable!("clap requires --random or --input"),
    };
    check_pack_dims(weights.rows(), weights.cols(), args.group_size)?;
    let packed = quantize_reference(&weights, args.group_size)?;
    let bytes = container::write_file(&args.out, &packed)?;
    writeln!(
        out,
        "k={} n={} group_size={} bytes={} path={}",
        packed.k(),
        packed.n(),
        args.group_size,
        bytes,
        args.out.display()
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify(cli: &Cli, args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    if args.splits.is_empty() || args.splits.contains(&0) || args.m == 0 {
        return Err(Error::Usage("--m and every --splits value must be at least 1".into()));
    }
    let packed = container::read_file(&args.packed)?;
    let base = cli.kernel_config()?;
    let a = random::uniform_matrix(&mut random::rng(cli.seed), args.m, packed.k())?;
    let oracle = oracle_gemm(&a, &dequantize(&packed))?;
    let dp = exec::dp_gemm(&a, &packed, &base.data_parallel())?;
    writeln!(
        out,
        "verify m={} n={} k={} group_size={} seed={}",
        args.m,
        packed.n(),
        packed.k(),
        packed.params().group_size(),
        cli.seed
    )?;
    let mut worst: Option<(usize, f32, usize, usize, f32, f32)> = None;
    for &split in &args.splits {
        let cfg = base.with_split_k(split);
        let c = exec::splitk_gemm(&a, &packed, &cfg)?;
        let (err, i, j) = c.max_abs_diff(&oracle)?;
        let (vs_dp, _, _) = c.max_abs_diff(&dp)?;
        let tol = equivalence_tolerance(&c);
        let ok = err <= tol;
        writeln!(
            out,
            "split_k={split:<3} grid={:<6} max_abs_err={err:.3e} tolerance={tol:.3e} vs_dp={} {}",
            grid_size(args.m, packed.n(), &cfg),
            if vs_dp == 0.0 { "0".to_string() } else { format!("{vs_dp:.3e}") },
            if ok { "ok" } else { "FAIL" }
        )?;
        if !ok && worst.is_none_or(|w| err / tol > w.1 / w.4) {
            worst = Some((split, err, i, j, tol, c.get(i, j)));
        }
    }
    match worst {
        None => {
            writeln!(out, "PASS")?;
            Ok(EXIT_OK)
        }
        Some((split, err, i, j, _, got)) => {
            writeln!(
                out,
                "FAIL worst split_k={split} at ({i}, {j}): got {got} expected {} (|diff| {err:.3e})",
                oracle.get(i, j)
            )?;
            Ok(EXIT_CHECK_FAILED)
        }
    }
}

fn load_or_generate(cli: &Cli, packed: &Option<PathBuf>, random_dims: &Option<Vec<usize>>) -> Result<PackedWeightMatrix> {
    match (packed, random_dims) {
        (Some(path), _) => container::read_file(path),
        (None, Some(dims)) => {
            let (k, n) = (dims[0], dims[1]);
            let group = random::group_size_for(k);
            check_pack_dims(k, n, group)?;
            random::quantized_weights(&mut random::rng(cli.seed), k, n, group)
        }
        (None, None) => unreachable!("clap requires --packed or --random"),
    }
}

fn cmd_gemm(cli: &Cli, args: &GemmArgs, out: &mut dyn Write) -> Result<i32> {
    if args.m == 0 || args.reps == 0 {
        return Err(Error::Usage("--m and --reps must be at least 1".into()));
    }
    let b = load_or_generate(cli, &args.packed, &args.random)?;
    let a = random::uniform_matrix(&mut random::rng(cli.seed.wrapping_add(1)), args.m, b.k())?;
    let (cfg, method) = match args.method {
        Kernel::Splitk => (cli.kernel_config()?, Method::SplitK),
        Kernel::Dp => (cli.kernel_config()?.data_parallel(), Method::DataParallel),
    };
    let run = || match method {
        Method::SplitK => exec::splitk_gemm(&a, &b, &cfg),
        Method::DataParallel => exec::dp_gemm(&a, &b, &cfg),
    };
    let c = run()?;
    let latency = bench::time_median(args.reps, 0, run)?;
    let checksum: f64 = c.as_slice().iter().map(|&v| v as f64).sum();
    writeln!(
        out,
        "m={} n={} k={} method={} split_k={} grid={} checksum={checksum:.6}",
        args.m,
        b.n(),
        b.k(),
        method.as_str(),
        cfg.split_k,
        grid_size(args.m, b.n(), &cfg)
    )?;
    writeln!(
        out,
        "latency_us={:.3} tflops={}",
        latency * 1e6,
        bench::format_sig(splitkq_core::bench::tflops(args.m, b.n(), b.k(), latency), 4)
    )?;
    if args.check {
        let oracle = oracle_gemm(&a, &dequantize(&b))?;
        let (err, _, _) = c.max_abs_diff(&oracle)?;
        let tol = equivalence_tolerance(&c);
        writeln!(out, "max_abs_err={err:.3e} tolerance={tol:.3e}")?;
        if err > tol {
            return Ok(EXIT_CHECK_FAILED);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_bench(cli: &Cli, args: &BenchArgs, out: &mut dyn Write) -> Result<i32> {
    if args.reps == 0 {
        return Err(Error::Usage("--reps must be at least 1".into()));
    }
    if args.m.is_empty() || args.m.contains(&0) {
        return Err(Error::Usage("--m values must be at least 1".into()));
    }
    if args.nk.is_empty() || args.nk.iter().any(|&v| v == 0 || v % NIBBLES_PER_WORD != 0) {
        return Err(Error::Usage(format!(
            "--nk values must be positive multiples of {NIBBLES_PER_WORD}"
        )));
    }
    let mut nks = args.nk.clone();
    if args.large {
        nks.extend(bench::LARGE_NK.iter().filter(|v| !args.nk.contains(v)));
    }
    let shapes = bench::shape_grid(&args.m, &nks);
    let cfg = cli.kernel_config()?;
    let opts = BenchOptions {
        reps: args.reps,
        seed: cli.seed,
        ..BenchOptions::default()
    };
    let records = match &args.sweep {
        None => bench::run_grid(&shapes, &cfg, &opts)?,
        Some(splits) => {
            let mut records = Vec::new();
            for &shape in &shapes {
                let report = bench::sweep_splitk(shape, splits, &cfg, &opts)?;
                writeln!(
                    out,
                    "sweep m={} n={} k={}: best split_k={} on this host",
                    shape.0, shape.1, shape.2, report.best_split
                )?;
                for p in &report.points {
                    if !p.within_tolerance() {
                        writeln!(out, "split_k={} exceeded tolerance: {:.3e}", p.record.split_k, p.max_abs_err)?;
                        return Ok(EXIT_CHECK_FAILED);
                    }
                }
                records.push(report.baseline);
                records.extend(report.points.into_iter().map(|p| p.record));
            }
            writeln!(out, "(published GPU optima: split_k=4 on A100 80GB, split_k=8 on H100)")?;
            records
        }
    };
    bench::write_table(&mut *out, &bench::summarize(&records)?)?;
    if let Some(path) = &args.csv {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        bench::write_csv(&mut w, &records)?;
        w.flush()?;
        writeln!(out, "wrote {} rows to {}", records.len(), path.display())?;
    }
    Ok(EXIT_OK)
}

fn fmt_limit(v: Option<u32>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn write_occupancy(out: &mut dyn Write, label: &str, occ: &Occupancy) -> Result<()> {
    writeln!(
        out,
        "occupancy {label}: {} blocks/SM, bound by {} (register limit {}, shared memory limit {}, slot limit {})",
        occ.blocks_per_sm,
        occ.limited_by.label(),
        fmt_limit(occ.register_limit),
        fmt_limit(occ.shared_mem_limit),
        occ.slot_limit
    )?;
    Ok(())
}

fn write_waves(out: &mut dyn Write, label: &str, w: &WaveReport) -> Result<()> {
    writeln!(
        out,
        "waves {label}: grid {} blocks_per_wave {} full_waves {} tail_blocks {} tail_utilization {:.3} waves_total {}",
        w.grid, w.blocks_per_wave, w.full_waves, w.tail_blocks, w.tail_utilization, w.waves_total
    )?;
    Ok(())
}

fn cmd_model(cli: &Cli, args: &ModelArgs, out: &mut dyn Write) -> Result<i32> {
    let hw = profiles::resolve(&args.profile)?;
    let cfg = cli.kernel_config()?;
    let (m, n, k) = if args.paper_case {
        PROFILED_SHAPE
    } else {
        (args.m, args.n, args.k)
    };
    let dp_cfg = cfg.data_parallel();
    write_profile(out, &hw)?;
    writeln!(
        out,
        "shape m={m} n={n} k={k} tiles {}x{}x{} split_k={}",
        cfg.block_m, cfg.block_n, cfg.block_k, cfg.split_k
    )?;
    let cmp = compare_decompositions(m, n, k, &dp_cfg, &cfg, &hw)?;
    writeln!(
        out,
        "data_parallel: grid {} k_iterations {}",
        cmp.dp_grid, cmp.dp_k_iterations
    )?;
    writeln!(
        out,
        "split_k: grid {} k_iterations {} ({}x blocks)",
        cmp.splitk_grid, cmp.splitk_k_iterations, cmp.grid_ratio
    )?;

    let res = |regs, smem| BlockResources {
        registers_per_thread: regs,
        threads_per_block: args.threads,
        shared_mem_per_block: smem,
    };
    let occ_dp = occupancy_limit(&res(args.regs_dp, args.smem_dp), &hw)?;
    let occ_sk = occupancy_limit(&res(args.regs_splitk, args.smem_splitk), &hw)?;
    write_occupancy(out, "data_parallel", &occ_dp)?;
    write_occupancy(out, "split_k", &occ_sk)?;

    writeln!(out, "one block per SM:")?;
    write_waves(out, "data_parallel", &cmp.dp)?;
    write_waves(out, "split_k", &cmp.splitk)?;
    writeln!(out, "splitk_reduces_tail_waste {}", cmp.splitk_reduces_tail_waste)?;

    let at = compare_decompositions_at(m, n, k, &dp_cfg, &cfg, &hw, occ_dp.blocks_per_sm, occ_sk.blocks_per_sm)?;
    writeln!(out, "at modeled occupancy:")?;
    write_waves(out, "data_parallel", &at.dp)?;
    write_waves(out, "split_k", &at.splitk)?;
    writeln!(out, "splitk_reduces_tail_waste {}", at.splitk_reduces_tail_waste)?;

    if args.paper_case {
        writeln!(out, "profiled reference (A100, m=16 n=k=4096):")?;
        for (label, p) in [("split_k", PROFILED_SPLITK), ("data_parallel", PROFILED_DATA_PARALLEL)] {
            writeln!(
                out,
                "  {label}: grid {} registers {} smem {:.2}KB block limit registers {} smem {} \
                 latency {:.2}us throughput {} GB/s occupancy {} SM utilization {}%",
                p.grid_size,
                p.registers_per_thread,
                p.shared_mem_kb,
                p.block_limit_registers,
                p.block_limit_shared_mem,
                p.latency_us,
                p.global_mem_throughput_gbs,
                p.achieved_occupancy,
                p.sm_utilization_pct
            )?;
        }
        let grids_match = cmp.splitk_grid == PROFILED_SPLITK.grid_size && cmp.dp_grid == PROFILED_DATA_PARALLEL.grid_size;
        let limits_match = occ_sk.register_limit == Some(PROFILED_SPLITK.block_limit_registers)
            && occ_dp.register_limit == Some(PROFILED_DATA_PARALLEL.block_limit_registers);
        writeln!(
            out,
            "reproduced: grid {}/{} {}, register block limits {}/{} {}",
            cmp.splitk_grid,
            cmp.dp_grid,
            if grids_match { "match" } else { "differ" },
            fmt_limit(occ_sk.register_limit),
            fmt_limit(occ_dp.register_limit),
            if limits_match { "match" } else { "differ" }
        )?;
    }
    Ok(EXIT_OK)
}

fn write_profile(out: &mut dyn Write, hw: &HardwareProfile) -> Result<()> {
    writeln!(
        out,
        "profile {} ({}): {} SMs, {} registers/SM, {} B shared memory/SM, {} blocks/SM, {} TFLOPS fp16, {} GB/s",
        hw.name,
        hw.architecture,
        hw.sm_count,
        hw.registers_per_sm,
        hw.shared_mem_per_sm,
        hw.max_blocks_per_sm,
        hw.fp16_tflops,
        hw.mem_bandwidth_gbs
    )?;
    Ok(())
}
