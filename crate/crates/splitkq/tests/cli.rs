use std::fs;
use std::path::Path;
use std::process::Command;

use splitkq::cli::run;

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("splitkq").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pack_writes_expected_size() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.w4pk");
    let (code, out, _) = invoke(&["pack", "--random", "256", "256", "--group-size", "128", "--out", path_str(&file)]);
    assert_eq!(code, 0);
    let expected = 18 + 2 * 256 * 4 + 256 * 4 + 32 * 256 * 4;
    assert_eq!(fs::metadata(&file).unwrap().len(), expected as u64);
    assert!(out.contains("k=256 n=256 group_size=128 bytes=35858"));
}

#[test]
fn pack_rejects_group_not_dividing_k() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.w4pk");
    let (code, _, err) = invoke(&["pack", "--random", "256", "64", "--group-size", "96", "--out", path_str(&file)]);
    assert_eq!(code, 2);
    assert!(err.contains("group size 96 must divide k = 256"), "{err}");
    assert!(!file.exists());
}

#[test]
fn pack_from_text_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("w.txt");
    let rows: Vec<String> = (0..16).map(|r| format!("{}, -0.5 {}", r as f32 * 0.1, -(r as f32))).collect();
    fs::write(&input, rows.join("\n")).unwrap();
    let file = dir.path().join("w.w4pk");
    let (code, out, err) = invoke(&["pack", "--input", path_str(&input), "--group-size", "8", "-o", path_str(&file)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("k=16 n=3 group_size=8"));
    fs::write(&input, "1 2\n3\n").unwrap();
    assert_eq!(invoke(&["pack", "--input", path_str(&input), "-o", path_str(&file)]).0, 2);
}

#[test]
fn pack_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.w4pk");
    assert_eq!(invoke(&["pack", "--random", "256", "256", "--out", path_str(&file)]).0, 0);
    let (code, out, _) = invoke(&["verify", path_str(&file)]);
    assert_eq!(code, 0, "{out}");
    for split in [1, 2, 4, 8, 16] {
        assert!(out.contains(&format!("split_k={split:<3}")), "{out}");
    }
    assert!(out.trim_end().ends_with("PASS"));

    let (code, out, _) = invoke(&["verify", path_str(&file), "--splits", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("vs_dp=0 ok"), "{out}");
}

#[test]
fn verify_rejects_corrupt_container() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.w4pk");
    invoke(&["pack", "--random", "64", "32", "--group-size", "32", "--out", path_str(&file)]);
    let mut bytes = fs::read(&file).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    fs::write(&file, bytes).unwrap();
    let (code, _, err) = invoke(&["verify", path_str(&file)]);
    assert_eq!(code, 2);
    assert!(err.contains("bad container"), "{err}");
    let (code, _, _) = invoke(&["verify", path_str(&dir.path().join("missing"))]);
    assert_eq!(code, 3);
}

#[test]
fn bench_validation_and_pairing() {
    assert_eq!(invoke(&["bench", "--reps", "0"]).0, 2);
    assert_eq!(invoke(&["bench", "--nk", "100"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("b.csv");
    let (code, out, _) = invoke(&["bench", "--m", "1", "--nk", "512", "--reps", "1", "--csv", path_str(&csv_path)]);
    assert_eq!(code, 0);
    assert!(out.contains("SplitK [TFLOPS]"));
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[8].parse::<f64>().is_ok()));
    let bad_dir = dir.path().join("nope").join("b.csv");
    assert_eq!(invoke(&["bench", "--m", "1", "--nk", "64", "--reps", "1", "--csv", path_str(&bad_dir)]).0, 3);
}

#[test]
fn bench_sweep() {
    let (code, out, _) = invoke(&["bench", "--m", "1", "--nk", "256", "--reps", "1", "--sweep", "1,2,4"]);
    assert_eq!(code, 0);
    assert!(out.contains("best split_k="));
    assert_eq!(out.lines().filter(|l| l.trim_start().starts_with("1    256")).count(), 3, "{out}");
}

#[test]
fn model_paper_case() {
    let (code, out, _) = invoke(&["model", "--paper-case"]);
    assert_eq!(code, 0);
    assert!(out.contains("grid 512"));
    assert!(out.contains("grid 128"));
    assert!(out.contains("reproduced: grid 512/128 match, register block limits 5/3 match"));
}

#[test]
fn model_default_tail_utilization() {
    let (code, out, _) = invoke(&["model", "--profile", "a100-80", "--m", "16", "--n", "4096", "--k", "4096"]);
    assert_eq!(code, 0);
    let line = out.lines().find(|l| l.starts_with("waves split_k: grid 512")).unwrap();
    assert!(line.contains("tail_utilization 0.741"), "{line}");
}

#[test]
fn model_profiles_differ_only_in_sm_count() {
    let (_, h100, _) = invoke(&["model", "--profile", "h100"]);
    let (_, a100, _) = invoke(&["model", "--profile", "a100-80"]);
    let waves = |s: &str| -> Vec<String> { s.lines().filter(|l| l.starts_with("waves")).map(String::from).collect() };
    let (h, a) = (waves(&h100), waves(&a100));
    assert!(h[0].contains("blocks_per_wave 132") && a[0].contains("blocks_per_wave 108"));
    let grids = |s: &str| -> Vec<String> { s.lines().filter(|l| l.contains(": grid ") && !l.starts_with("waves")).map(String::from).collect() };
    assert_eq!(grids(&h100), grids(&a100));
    assert_ne!(h, a);
}

#[test]
fn model_unknown_profile() {
    let (code, _, err) = invoke(&["model", "--profile", "tpu"]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown profile"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(invoke(&[]).0, 2);
    assert_eq!(invoke(&["frobnicate"]).0, 2);
    assert_eq!(invoke(&["model", "--block-m", "0"]).0, 2);
    assert_eq!(invoke(&["--help"]).0, 0);
}

#[test]
fn gemm_runs_and_checks() {
    let (code, out, _) = invoke(&["gemm", "--random", "128", "64", "--m", "3", "--check"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("method=split_k split_k=4 grid=8"));
    let (code, out, _) = invoke(&["gemm", "--random", "128", "64", "--method", "dp", "--split-k", "8"]);
    assert_eq!(code, 0);
    assert!(out.contains("method=data_parallel split_k=1 grid=2"));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.w4pk");
    let b = dir.path().join("b.w4pk");
    invoke(&["pack", "--random", "128", "64", "--seed", "9", "--out", path_str(&a)]);
    invoke(&["pack", "--random", "128", "64", "--seed", "9", "--out", path_str(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(invoke(&["verify", path_str(&a)]).1, invoke(&["verify", path_str(&a)]).1);
    assert_eq!(invoke(&["model", "--paper-case"]).1, invoke(&["model", "--paper-case"]).1);
    let strip = |s: String| s.lines().filter(|l| !l.starts_with("latency_us")).collect::<Vec<_>>().join("\n");
    let args = ["gemm", "--packed", path_str(&a), "--m", "2", "--workers", "3"];
    assert_eq!(strip(invoke(&args).1), strip(invoke(&args).1));
}

#[test]
fn binary_uses_profile_dir() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("mini.profile"),
        "name=mini\nsm_count=10\nregisters_per_sm=65536\nshared_mem_per_sm=100000\n\
         max_blocks_per_sm=16\nfp16_tflops=50\nmem_bandwidth_gbs=500\n",
    )
    .unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_splitkq"))
        .args(["model", "--profile", "mini"])
        .env("SPLITKQ_PROFILE_DIR", dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("profile mini (unknown): 10 SMs"));
    assert!(stdout.contains("blocks_per_wave 10 full_waves 51 tail_blocks 2"));

    let status = Command::new(env!("CARGO_BIN_EXE_splitkq"))
        .args(["model", "--profile", "mini"])
        .env_remove("SPLITKQ_PROFILE_DIR")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
