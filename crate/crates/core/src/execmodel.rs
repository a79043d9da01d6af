//! Analytic GPU execution model: occupancy limits and wave decomposition.
//!
//! The model is idealized. Every block of a grid takes the same time, the
//! scheduler fills all SMs before starting the next wave, and register
//! allocation granularity is ignored.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gemm::{grid_size, KernelConfig};

pub const MAX_THREADS_PER_BLOCK: u32 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareProfile {
    pub name: String,
    pub architecture: String,
    pub sm_count: u32,
    /// 32-bit registers available on one SM.
    pub registers_per_sm: u32,
    /// Bytes of shared memory usable by blocks on one SM.
    pub shared_mem_per_sm: u32,
    pub max_blocks_per_sm: u32,
    pub fp16_tflops: f64,
    pub mem_bandwidth_gbs: f64,
    pub memory_gb: u32,
    pub l2_cache_mb: u32,
    pub l1_cache_per_sm_kb: u32,
}

pub const BUILTIN_PROFILES: [&str; 3] = ["a100-40", "a100-80", "h100"];

impl HardwareProfile {
    pub fn a100_40gb() -> Self {
        Self {
            name: "a100-40".into(),
            architecture: "Ampere".into(),
            sm_count: 108,
            registers_per_sm: 65_536,
            shared_mem_per_sm: 167_936,
            max_blocks_per_sm: 32,
            fp16_tflops: 312.0,
            mem_bandwidth_gbs: 1500.0,
            memory_gb: 40,
            l2_cache_mb: 40,
            l1_cache_per_sm_kb: 192,
        }
    }

    pub fn a100_80gb() -> Self {
        Self {
            name: "a100-80".into(),
            memory_gb: 80,
            mem_bandwidth_gbs: 2000.0,
            ..Self::a100_40gb()
        }
    }

    pub fn h100() -> Self {
        Self {
            name: "h100".into(),
            architecture: "Hopper".into(),
            sm_count: 132,
            registers_per_sm: 65_536,
            shared_mem_per_sm: 233_472,
            max_blocks_per_sm: 32,
            fp16_tflops: 1513.0,
            mem_bandwidth_gbs: 2000.0,
            memory_gb: 80,
            l2_cache_mb: 50,
            l1_cache_per_sm_kb: 256,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "a100-40" => Some(Self::a100_40gb()),
            "a100-80" => Some(Self::a100_80gb()),
            "h100" => Some(Self::h100()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sm_count", self.sm_count),
            ("registers_per_sm", self.registers_per_sm),
            ("shared_mem_per_sm", self.shared_mem_per_sm),
            ("max_blocks_per_sm", self.max_blocks_per_sm),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParams(format!("{key} must be positive")));
            }
        }
        if !(self.fp16_tflops > 0.0 && self.mem_bandwidth_gbs > 0.0) {
            return Err(Error::InvalidParams(
                "fp16_tflops and mem_bandwidth_gbs must be positive".into(),
            ));
        }
        if self.name.is_empty() {
            return Err(Error::InvalidParams("profile name is empty".into()));
        }
        Ok(())
    }

    /// Parses a `key=value` profile. Blank lines and `#` comments are
    /// skipped. The seven core keys are required; `architecture`,
    /// `memory_gb`, `l2_cache_mb` and `l1_cache_per_sm_kb` are optional.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Self {
            name: String::new(),
            architecture: "unknown".into(),
            sm_count: 0,
            registers_per_sm: 0,
            shared_mem_per_sm: 0,
            max_blocks_per_sm: 0,
            fp16_tflops: 0.0,
            mem_bandwidth_gbs: 0.0,
            memory_gb: 0,
            l2_cache_mb: 0,
            l1_cache_per_sm_kb: 0,
        };
        const REQUIRED: [&str; 7] = [
            "name",
            "sm_count",
            "registers_per_sm",
            "shared_mem_per_sm",
            "max_blocks_per_sm",
            "fp16_tflops",
            "mem_bandwidth_gbs",
        ];
        let mut seen = [false; REQUIRED.len()];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected key=value, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| {
                v.parse::<u32>().map_err(|e| Error::Parse {
                    line,
                    message: format!("{key}: {e}"),
                })
            };
            let real = |v: &str| {
                v.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("{key}: {e}"),
                })
            };
            match key {
                "name" => p.name = value.to_string(),
                "architecture" => p.architecture = value.to_string(),
                "sm_count" => p.sm_count = int(value)?,
                "registers_per_sm" => p.registers_per_sm = int(value)?,
                "shared_mem_per_sm" => p.shared_mem_per_sm = int(value)?,
                "max_blocks_per_sm" => p.max_blocks_per_sm = int(value)?,
                "fp16_tflops" => p.fp16_tflops = real(value)?,
                "mem_bandwidth_gbs" => p.mem_bandwidth_gbs = real(value)?,
                "memory_gb" => p.memory_gb = int(value)?,
                "l2_cache_mb" => p.l2_cache_mb = int(value)?,
                "l1_cache_per_sm_kb" => p.l1_cache_per_sm_kb = int(value)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
            if let Some(i) = REQUIRED.iter().position(|r| *r == key) {
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Parse {
                line: 0,
                message: format!("missing required key {:?}", REQUIRED[i]),
            });
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.name);
        let _ = writeln!(s, "architecture={}", self.architecture);
        let _ = writeln!(s, "sm_count={}", self.sm_count);
        let _ = writeln!(s, "registers_per_sm={}", self.registers_per_sm);
        let _ = writeln!(s, "shared_mem_per_sm={}", self.shared_mem_per_sm);
        let _ = writeln!(s, "max_blocks_per_sm={}", self.max_blocks_per_sm);
        let _ = writeln!(s, "fp16_tflops={}", self.fp16_tflops);
        let _ = writeln!(s, "mem_bandwidth_gbs={}", self.mem_bandwidth_gbs);
        let _ = writeln!(s, "memory_gb={}", self.memory_gb);
        let _ = writeln!(s, "l2_cache_mb={}", self.l2_cache_mb);
        let _ = writeln!(s, "l1_cache_per_sm_kb={}", self.l1_cache_per_sm_kb);
        s
    }
}

/// Resources one thread block claims on its SM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockResources {
    pub registers_per_thread: u32,
    pub threads_per_block: u32,
    pub shared_mem_per_block: u32,
}

impl BlockResources {
    pub const DEFAULT_THREADS: u32 = 128;

    pub fn registers_per_block(&self) -> u64 {
        self.registers_per_thread as u64 * self.threads_per_block as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitingFactor {
    Registers,
    SharedMemory,
    BlockSlots,
}

impl LimitingFactor {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Registers => "registers",
            Self::SharedMemory => "shared memory",
            Self::BlockSlots => "block slots",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occupancy {
    pub blocks_per_sm: u32,
    pub limited_by: LimitingFactor,
    /// `None` when the block uses no registers.
    pub register_limit: Option<u32>,
    /// `None` when the block uses no shared memory.
    pub shared_mem_limit: Option<u32>,
    pub slot_limit: u32,
}

/// Resident blocks per SM. On ties the binding factor is reported in the
/// order registers, shared memory, block slots.
pub fn occupancy_limit(res: &BlockResources, hw: &HardwareProfile) -> Result<Occupancy> {
    hw.validate()?;
    if res.threads_per_block == 0 || res.threads_per_block > MAX_THREADS_PER_BLOCK {
        return Err(Error::InvalidParams(format!(
            "threads_per_block must be in 1..={MAX_THREADS_PER_BLOCK}, got {}",
            res.threads_per_block
        )));
    }
    let regs = res.registers_per_block();
    if regs > hw.registers_per_sm as u64 {
        return Err(Error::Infeasible {
            resource: "registers",
            required: regs,
            available: hw.registers_per_sm as u64,
        });
    }
    if res.shared_mem_per_block > hw.shared_mem_per_sm {
        return Err(Error::Infeasible {
            resource: "bytes of shared memory",
            required: res.shared_mem_per_block as u64,
            available: hw.shared_mem_per_sm as u64,
        });
    }
    let register_limit = (regs > 0).then(|| (hw.registers_per_sm as u64 / regs) as u32);
    let shared_mem_limit =
        (res.shared_mem_per_block > 0).then(|| hw.shared_mem_per_sm / res.shared_mem_per_block);
    let slot_limit = hw.max_blocks_per_sm;

    let mut best = (slot_limit, LimitingFactor::BlockSlots);
    for (limit, factor) in [
        (shared_mem_limit, LimitingFactor::SharedMemory),
        (register_limit, LimitingFactor::Registers),
    ] {
        if let Some(l) = limit {
            if l <= best.0 {
                best = (l, factor);
            }
        }
    }
    Ok(Occupancy {
        blocks_per_sm: best.0,
        limited_by: best.1,
        register_limit,
        shared_mem_limit,
        slot_limit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveReport {
    pub grid: u64,
    pub blocks_per_wave: u64,
    pub full_waves: u64,
    pub tail_blocks: u64,
    /// Fraction of the last wave's slots doing work; 1.0 when the grid is
    /// an exact multiple of the wave.
    pub tail_utilization: f64,
    pub waves_total: u64,
}

impl WaveReport {
    /// Mean fraction of wave slots in use over the whole schedule.
    pub fn efficiency(&self) -> f64 {
        if self.waves_total == 0 {
            return 1.0;
        }
        self.grid as f64 / (self.waves_total * self.blocks_per_wave) as f64
    }
}

pub fn wave_report(grid: u64, hw: &HardwareProfile, blocks_per_sm: u32) -> Result<WaveReport> {
    if grid == 0 {
        return Err(Error::InvalidConfig("grid must contain at least one block"));
    }
    if blocks_per_sm == 0 || hw.sm_count == 0 {
        return Err(Error::InvalidConfig("blocks per SM and SM count must be positive"));
    }
    let blocks_per_wave = hw.sm_count as u64 * blocks_per_sm as u64;
    let full_waves = grid / blocks_per_wave;
    let tail_blocks = grid % blocks_per_wave;
    Ok(WaveReport {
        grid,
        blocks_per_wave,
        full_waves,
        tail_blocks,
        tail_utilization: if tail_blocks > 0 {
            tail_blocks as f64 / blocks_per_wave as f64
        } else {
            1.0
        },
        waves_total: full_waves + (tail_blocks > 0) as u64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionComparison {
    pub profile: String,
    pub dp_grid: u64,
    pub splitk_grid: u64,
    pub grid_ratio: f64,
    pub dp_k_iterations: usize,
    pub splitk_k_iterations: usize,
    pub dp: WaveReport,
    pub splitk: WaveReport,
    /// SplitK tail utilization minus data-parallel tail utilization.
    pub tail_utilization_delta: f64,
    pub splitk_reduces_tail_waste: bool,
}

/// Compares both decompositions with one resident block per SM.
pub fn compare_decompositions(
    m: usize,
    n: usize,
    k: usize,
    config_dp: &KernelConfig,
    config_splitk: &KernelConfig,
    hw: &HardwareProfile,
) -> Result<DecompositionComparison> {
    compare_decompositions_at(m, n, k, config_dp, config_splitk, hw, 1, 1)
}

/// Like [`compare_decompositions`] with explicit per-SM residency for each
/// kernel, e.g. from [`occupancy_limit`].
#[allow(clippy::too_many_arguments)]
pub fn compare_decompositions_at(
    m: usize,
    n: usize,
    k: usize,
    config_dp: &KernelConfig,
    config_splitk: &KernelConfig,
    hw: &HardwareProfile,
    dp_blocks_per_sm: u32,
    splitk_blocks_per_sm: u32,
) -> Result<DecompositionComparison> {
    config_dp.validate()?;
    config_splitk.validate()?;
    if config_dp.split_k != 1 {
        return Err(Error::InvalidConfig("data-parallel config requires split_k = 1"));
    }
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::Dimension(format!("empty problem {m}x{n}x{k}")));
    }
    let dp_grid = grid_size(m, n, config_dp) as u64;
    let splitk_grid = grid_size(m, n, config_splitk) as u64;
    let dp = wave_report(dp_grid, hw, dp_blocks_per_sm)?;
    let splitk = wave_report(splitk_grid, hw, splitk_blocks_per_sm)?;
    Ok(DecompositionComparison {
        profile: hw.name.clone(),
        dp_grid,
        splitk_grid,
        grid_ratio: splitk_grid as f64 / dp_grid as f64,
        dp_k_iterations: config_dp.num_pid_k(k),
        splitk_k_iterations: config_splitk.num_pid_k(k),
        dp,
        splitk,
        tail_utilization_delta: splitk.tail_utilization - dp.tail_utilization,
        splitk_reduces_tail_waste: splitk.tail_utilization >= dp.tail_utilization,
    })
}

/// Per-kernel numbers from a profiler run, kept for reference output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfiledKernel {
    pub latency_us: f64,
    pub global_mem_throughput_gbs: f64,
    pub grid_size: u64,
    pub registers_per_thread: u32,
    pub shared_mem_kb: f64,
    pub block_limit_registers: u32,
    pub block_limit_shared_mem: u32,
    pub achieved_occupancy: f64,
    pub sm_utilization_pct: f64,
    pub active_warps: f64,
    pub eligible_warps: f64,
    pub issued_warps: f64,
    pub issued_ipc_active: f64,
}

/// The m = 16, n = k = 4096 profiling case on an A100, SplitK (split_k = 4)
/// and data-parallel.
pub const PROFILED_SPLITK: ProfiledKernel = ProfiledKernel {
    latency_us: 27.90,
    global_mem_throughput_gbs: 313.0,
    grid_size: 512,
    registers_per_thread: 92,
    shared_mem_kb: 102.40,
    block_limit_registers: 5,
    block_limit_shared_mem: 5,
    achieved_occupancy: 27.75,
    sm_utilization_pct: 43.05,
    active_warps: 4.45,
    eligible_warps: 0.67,
    issued_warps: 0.43,
    issued_ipc_active: 1.72,
};

pub const PROFILED_DATA_PARALLEL: ProfiledKernel = ProfiledKernel {
    latency_us: 52.93,
    global_mem_throughput_gbs: 161.0,
    grid_size: 128,
    registers_per_thread: 150,
    shared_mem_kb: 167.94,
    block_limit_registers: 3,
    block_limit_shared_mem: 2,
    achieved_occupancy: 7.55,
    sm_utilization_pct: 20.75,
    active_warps: 1.21,
    eligible_warps: 0.20,
    issued_warps: 0.19,
    issued_ipc_active: 0.75,
};

/// Shape of the profiled case.
pub const PROFILED_SHAPE: (usize, usize, usize) = (16, 4096, 4096);

pub fn builtin_profiles() -> Vec<HardwareProfile> {
    BUILTIN_PROFILES
        .iter()
        .filter_map(|n| HardwareProfile::builtin(n))
        .collect()
}
