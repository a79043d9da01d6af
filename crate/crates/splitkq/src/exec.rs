//! Multi-threaded kernel execution.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use splitkq_core::gemm::{self, Executor, KernelConfig};
use splitkq_core::{DenseMatrix, PackedWeightMatrix};

use crate::error::Result;

/// Scoped worker threads pulling job indices from a shared counter.
#[derive(Debug, Clone, Copy)]
pub struct ThreadPool {
    workers: usize,
}

impl ThreadPool {
    pub fn new(workers: usize) -> Self {
        Self {
            workers: workers.max(1),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl Executor for ThreadPool {
    fn run(&self, count: usize, job: &(dyn Fn(usize) + Sync)) {
        let workers = self.workers.min(count);
        if workers <= 1 {
            (0..count).for_each(job);
            return;
        }
        let next = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= count {
                        break;
                    }
                    job(i);
                });
            }
        });
    }
}

pub fn available_workers() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Default tiles with one worker per available core.
pub fn default_config() -> KernelConfig {
    KernelConfig::default().with_workers(available_workers())
}

/// SplitK fused GEMM on `config.workers` threads.
pub fn splitk_gemm(a: &DenseMatrix, b: &PackedWeightMatrix, config: &KernelConfig) -> Result<DenseMatrix> {
    Ok(gemm::splitk_gemm_on(a, b, config, &ThreadPool::new(config.workers))?)
}

/// Data-parallel fused GEMM on `config.workers` threads.
pub fn dp_gemm(a: &DenseMatrix, b: &PackedWeightMatrix, config: &KernelConfig) -> Result<DenseMatrix> {
    Ok(gemm::dp_gemm_on(a, b, config, &ThreadPool::new(config.workers))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    #[test]
    fn runs_every_job_once() {
        for workers in [1, 3, 16] {
            let seen = Mutex::new(vec![0u32; 100]);
            ThreadPool::new(workers).run(100, &|i| seen.lock().unwrap()[i] += 1);
            assert!(seen.into_inner().unwrap().iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn zero_jobs() {
        ThreadPool::new(4).run(0, &|_| panic!("no jobs expected"));
    }
}
