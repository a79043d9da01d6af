use rand::seq::SliceRandom;
use splitkq::random;
use splitkq::ThreadPool;
use splitkq_core::gemm::{equivalence_tolerance, KernelConfig};
use splitkq_core::*;

fn config(split_k: usize, workers: usize) -> KernelConfig {
    KernelConfig::default().with_split_k(split_k).with_workers(workers)
}

#[test]
fn dp_is_bitwise_stable_across_workers() {
    for seed in 0..5 {
        let (a, b) = random::problem(seed, 4, 256, 256).unwrap();
        let one = splitkq::dp_gemm(&a, &b, &config(1, 1)).unwrap();
        let eight = splitkq::dp_gemm(&a, &b, &config(1, 8)).unwrap();
        assert!(one.bitwise_eq(&eight));
    }
}

#[test]
fn dp_matches_oracle() {
    let (a, b) = random::problem(11, 4, 256, 256).unwrap();
    let oracle = oracle_gemm(&a, &dequantize(&b)).unwrap();
    let got = splitkq::dp_gemm(&a, &b, &config(1, 4)).unwrap();
    let bound = 1e-3 * 256.0 * got.max_abs().max(oracle.max_abs());
    assert!(got.max_abs_diff(&oracle).unwrap().0 <= bound);
}

#[test]
fn splitk_agrees_with_dp_and_oracle() {
    for seed in 0..50 {
        let (a, b) = random::problem(seed, 4, 256, 256).unwrap();
        let oracle = oracle_gemm(&a, &dequantize(&b)).unwrap();
        let dp = splitkq::dp_gemm(&a, &b, &config(1, 2)).unwrap();
        for split in [2, 4, 8, 16] {
            let sk = splitkq::splitk_gemm(&a, &b, &config(split, 2)).unwrap();
            assert!(sk.max_abs_diff(&oracle).unwrap().0 <= equivalence_tolerance(&sk));
            let rel = sk.max_abs_diff(&dp).unwrap().0 / dp.max_abs().max(1.0);
            assert!(rel <= 2e-3, "seed {seed} split {split}: {rel}");
        }
    }
}

#[test]
fn masked_k_tail_with_threads() {
    // k = 200 is not a multiple of block_k * split_k = 256
    let (a, b) = random::problem(5, 3, 72, 200).unwrap();
    let oracle = oracle_gemm(&a, &dequantize(&b)).unwrap();
    for split in [1, 3, 4, 7] {
        let sk = splitkq::splitk_gemm(&a, &b, &config(split, 3)).unwrap();
        assert!(sk.max_abs_diff(&oracle).unwrap().0 <= equivalence_tolerance(&sk));
    }
}

#[test]
fn shuffled_threaded_schedule() {
    let mut rng = random::rng(99);
    let (a, b) = random::problem(3, 16, 256, 256).unwrap();
    let cfg = config(8, 4);
    let oracle = oracle_gemm(&a, &dequantize(&b)).unwrap();
    let mut order: Vec<usize> = (0..grid_size(16, 256, &cfg)).collect();
    order.shuffle(&mut rng);
    let got = splitk_gemm_on(&a, &b, &cfg, &Permuted { order: &order, inner: ThreadPool::new(4) }).unwrap();
    assert!(got.max_abs_diff(&oracle).unwrap().0 <= equivalence_tolerance(&got));
}
