use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitkq_core::bench::{speedup_table, BenchRecord, Method};
use splitkq_core::execmodel::{occupancy_limit, wave_report, BlockResources, HardwareProfile};
use splitkq_core::gemm::equivalence_tolerance;
use splitkq_core::*;

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0f32..=1.0)).unwrap()
}

fn random_weights(rng: &mut impl Rng, k: usize, n: usize, group: usize) -> PackedWeightMatrix {
    quantize_reference(&random_matrix(rng, k, n), group).unwrap()
}

fn random_packed(rng: &mut impl Rng, k: usize, n: usize) -> PackedWeightMatrix {
    let words = (0..(k / 8) * n).map(|_| rng.gen()).collect();
    let params = QuantParams::uniform(k, n, 8, 0.5, 8).unwrap();
    PackedWeightMatrix::from_parts(k, n, words, params).unwrap()
}

#[test]
fn packed_words_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // 1000 random words, as one 8 x 1000 matrix
    let p = random_packed(&mut rng, 8, 1000);
    let again = pack_int4(&unpack_int4(&p), p.params().clone()).unwrap();
    assert_eq!(again.words(), p.words());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unpack_inverts_pack(k8 in 1usize..6, n in 1usize..9, seed in any::<u64>()) {
        let k = k8 * 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Int4Matrix::from_vec(k, n, (0..k * n).map(|_| rng.gen_range(0..=15u8)).collect()).unwrap();
        let p = pack_int4(&q, QuantParams::uniform(k, n, 8, 1.0, 0).unwrap()).unwrap();
        prop_assert_eq!(unpack_int4(&p), q);
    }

    #[test]
    fn dequantize_survives_repacking(k8 in 1usize..6, n in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_weights(&mut rng, k8 * 8, n, 8);
        let repacked = pack_int4(&unpack_int4(&p), p.params().clone()).unwrap();
        prop_assert!(dequantize(&p).bitwise_eq(&dequantize(&repacked)));
    }

    #[test]
    fn quantization_error_within_half_step(
        groups in 1usize..4,
        group8 in 1usize..5,
        n in 1usize..6,
        seed in any::<u64>(),
    ) {
        let group = group8 * 8;
        let k = groups * group;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_matrix(&mut rng, k, n);
        let p = quantize_reference(&w, group).unwrap();
        let d = dequantize(&p);
        for r in 0..k {
            for c in 0..n {
                let scale = p.params().scale(r / group, c);
                let err = (w.get(r, c) - d.get(r, c)).abs();
                prop_assert!(err <= scale / 2.0 + 4.0 * f32::EPSILON, "err {} scale {}", err, scale);
            }
        }
    }

    #[test]
    fn splitk_matches_oracle_with_ragged_tiles(
        m in 1usize..20,
        k8 in 1usize..20,
        n in 1usize..40,
        block_m in 1usize..17,
        block_n in 1usize..33,
        block_k in 1usize..40,
        split_k in 1usize..9,
        seed in any::<u64>(),
    ) {
        let k = k8 * 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(&mut rng, m, k);
        let b = random_weights(&mut rng, k, n, 8);
        let cfg = KernelConfig { block_m, block_n, block_k, split_k, workers: 1 };
        let oracle = oracle_gemm(&a, &dequantize(&b)).unwrap();
        let got = splitk_gemm(&a, &b, &cfg).unwrap();
        let tol = equivalence_tolerance(&got);
        prop_assert!(got.max_abs_diff(&oracle).unwrap().0 <= tol);
        let dp = dp_gemm(&a, &b, &cfg.data_parallel()).unwrap();
        prop_assert!(dp.max_abs_diff(&oracle).unwrap().0 <= equivalence_tolerance(&dp));
        prop_assert!(splitk_gemm(&a, &b, &cfg.data_parallel()).unwrap().bitwise_eq(&dp));
    }

    #[test]
    fn task_order_does_not_matter(split_k in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k, n) = (5, 96, 40);
        let a = random_matrix(&mut rng, m, k);
        let b = random_weights(&mut rng, k, n, 32);
        let cfg = KernelConfig { block_m: 4, block_n: 16, block_k: 8, split_k, workers: 1 };
        let grid = grid_size(m, n, &cfg);
        let mut order: Vec<usize> = (0..grid).collect();
        order.reverse();
        order.rotate_left(seed as usize % grid);
        let shuffled = splitk_gemm_on(&a, &b, &cfg, &Permuted { order: &order, inner: Sequential }).unwrap();
        let oracle = oracle_gemm(&a, &dequantize(&b)).unwrap();
        prop_assert!(shuffled.max_abs_diff(&oracle).unwrap().0 <= equivalence_tolerance(&shuffled));
    }

    #[test]
    fn grid_is_linear_in_split(m in 1usize..64, n in 1usize..5000, s in 1usize..32) {
        let cfg = KernelConfig::default();
        let base = grid_size(m, n, &cfg.with_split_k(1));
        prop_assert_eq!(grid_size(m, n, &cfg.with_split_k(s)), base * s);
        prop_assert!(grid_size(m, n, &cfg.with_split_k(s + 1)) >= grid_size(m, n, &cfg.with_split_k(s)));
    }

    #[test]
    fn occupancy_monotone(
        regs in 0u32..256,
        threads in prop::sample::select(vec![32u32, 64, 128, 256]),
        smem in 0u32..100_000,
        extra in 1u32..4096,
    ) {
        let hw = HardwareProfile::a100_80gb();
        let base = BlockResources { registers_per_thread: regs, threads_per_block: threads, shared_mem_per_block: smem };
        let Ok(occ) = occupancy_limit(&base, &hw) else { return Ok(()); };
        let heavier = [
            BlockResources { registers_per_thread: regs + 1, ..base },
            BlockResources { shared_mem_per_block: smem + extra, ..base },
        ];
        for h in heavier {
            if let Ok(o) = occupancy_limit(&h, &hw) {
                prop_assert!(o.blocks_per_sm <= occ.blocks_per_sm);
            }
        }
        let bigger = [
            HardwareProfile { registers_per_sm: hw.registers_per_sm + extra, ..hw.clone() },
            HardwareProfile { shared_mem_per_sm: hw.shared_mem_per_sm + extra, ..hw.clone() },
            HardwareProfile { max_blocks_per_sm: hw.max_blocks_per_sm + 1, ..hw.clone() },
        ];
        for b in bigger {
            prop_assert!(occupancy_limit(&base, &b).unwrap().blocks_per_sm >= occ.blocks_per_sm);
        }
    }

    #[test]
    fn wave_invariants(grid in 1u64..100_000, bps in 1u32..8, h100 in any::<bool>()) {
        let hw = if h100 { HardwareProfile::h100() } else { HardwareProfile::a100_40gb() };
        let w = wave_report(grid, &hw, bps).unwrap();
        prop_assert_eq!(w.grid, w.full_waves * w.blocks_per_wave + w.tail_blocks);
        prop_assert!(w.tail_blocks < w.blocks_per_wave);
        prop_assert!(w.tail_utilization > 0.0 && w.tail_utilization <= 1.0);
        if w.tail_blocks > 0 {
            prop_assert_eq!(w.tail_utilization, w.tail_blocks as f64 / w.blocks_per_wave as f64);
        }
        let next = wave_report(grid + 1, &hw, bps).unwrap();
        prop_assert!(next.waves_total >= w.waves_total);
        let period = wave_report(grid + w.blocks_per_wave, &hw, bps).unwrap();
        prop_assert_eq!(period.tail_utilization, w.tail_utilization);
    }

    #[test]
    fn speedups_are_scale_invariant(lat in prop::collection::vec(1e-6f64..1e-2, 4), factor in 0.01f64..100.0) {
        let build = |f: f64| -> Vec<BenchRecord> {
            [(512, Method::SplitK), (512, Method::DataParallel), (1024, Method::SplitK), (1024, Method::DataParallel)]
                .iter()
                .zip(&lat)
                .map(|(&(nk, method), &t)| BenchRecord::from_latency("host", (1, nk, nk), method, 4, t * f, 5))
                .collect()
        };
        let a = speedup_table(&build(1.0)).unwrap();
        let b = speedup_table(&build(factor)).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!((x.speedup - y.speedup).abs() <= 1e-9 * x.speedup);
        }
        for r in build(factor) {
            prop_assert!(r.tflops_consistency_error() < 1e-12);
        }
    }
}
