use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use spadqrng_core::entropy::max_k;
use spadqrng_core::source::{expected_ones_fraction, BiasAccounting, DeviceProfile};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spadqrng"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn write_profile(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = p(dir, name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_single_frame_is_one_chip_read_burst() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "f.bin");
    ok(&["simulate", "--frames", "1", "--out", s(&out)]);
    assert_eq!(std::fs::read(&out).unwrap().len(), 2048);
    let meta = json(&dir.path().join("f.bin.meta.json"));
    assert_eq!(meta["bits"], 16384);
    assert_eq!(meta["frames"]["frame_count"], 1);
}

#[test]
fn simulate_is_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (p(&dir, "a"), p(&dir, "b"), p(&dir, "c"));
    ok(&["--seed", "7", "simulate", "--frames", "4", "--out", s(&a)]);
    ok(&["--seed", "7", "simulate", "--frames", "4", "--out", s(&b)]);
    ok(&["--seed", "8", "simulate", "--frames", "4", "--out", s(&c)]);
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    assert_ne!(a, std::fs::read(c).unwrap());
}

#[test]
fn simulated_ones_fraction_matches_model() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "f.bin");
    let frames = 2000u64;
    ok(&["--seed", "3", "simulate", "--frames", &frames.to_string(), "--out", s(&out)]);
    let bytes = std::fs::read(&out).unwrap();
    let ones: u64 = bytes.iter().map(|b| b.count_ones() as u64).sum();
    let bits = frames as f64 * 16384.0;
    let profile = DeviceProfile::chip_default();
    let q = expected_ones_fraction(&profile, profile.lambda, BiasAccounting::AllPixels);
    let z = (ones as f64 / bits - q) / (q * (1.0 - q) / bits).sqrt();
    assert!(z.abs() < 3.0, "ones fraction z = {z}");
}

#[test]
fn side_info_has_one_line_per_frame() {
    let dir = TempDir::new().unwrap();
    let (out, side) = (p(&dir, "f.bin"), p(&dir, "side.jsonl"));
    ok(&["simulate", "--frames", "3", "--out", s(&out), "--side-info", s(&side)]);
    let text = std::fs::read_to_string(side).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
}

#[test]
fn calibrate_writes_a_loadable_profile() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "cal.profile");
    ok(&["calibrate", "--target", "0.5036", "--accounting", "ones", "--out", s(&out)]);
    let sim = p(&dir, "f.bin");
    ok(&["--profile", s(&out), "simulate", "--out", s(&sim)]);
}

#[test]
fn certify_sizes_extractor_from_reported_rate() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "cert.json");
    ok(&["certify", "--samples", "300", "--no-validate", "--out", s(&out)]);
    let report = json(&out);
    let certified = &report["certified"];
    let rate = certified["h_min_per_raw_bit"].as_f64().unwrap();
    let k = certified["extraction"]["k_max"].as_u64().unwrap();
    assert_eq!(k, max_k(rate, 1024, -100.0).unwrap() as u64);
    let eps32 = certified["extraction"]["epsilon_log2_at"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e[0] == 32)
        .unwrap()[1]
        .as_f64()
        .unwrap();
    assert!(eps32 < -300.0, "eps(32) = 2^{eps32}");
    assert_eq!(certified["params"]["eta"].as_f64().unwrap(), 0.09);
}

#[test]
fn certify_with_validation_passes_oracle_checks() {
    let dir = TempDir::new().unwrap();
    let out = p(&dir, "cert.json");
    ok(&["certify", "--samples", "100", "--oracle-trials", "20000", "--out", s(&out)]);
    let report = json(&out);
    assert_eq!(report["validation_passed"], true);
    assert!(report["validation"].as_array().unwrap().len() >= 4);
}

#[test]
fn certify_dead_source_has_no_extractable_bits() {
    let dir = TempDir::new().unwrap();
    let prof = write_profile(&dir, "dead.profile", "rows = 4\ncols = 4\nlambda = 0\np_dark = 0\np_cross = 0\n");
    let out = run(&["--profile", s(&prof), "certify", "--samples", "50", "--no-validate"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn extract_one_frame_gives_sixteen_words() {
    let dir = TempDir::new().unwrap();
    let (raw, matrix, out) = (p(&dir, "f.bin"), p(&dir, "m.txt"), p(&dir, "x.bin"));
    ok(&["simulate", "--frames", "1", "--out", s(&raw)]);
    ok(&["matrix-gen", "--out", s(&matrix)]);
    ok(&["extract", "--input", s(&raw), "--matrix", s(&matrix), "--out", s(&out)]);
    assert_eq!(json(&dir.path().join("x.bin.meta.json"))["bits"], 512);
    assert_eq!(std::fs::read(&out).unwrap().len(), 64);

    let var = p(&dir, "v.txt");
    let vout = p(&dir, "v.bin");
    ok(&["matrix-gen", "--mode", "variable", "--out", s(&var)]);
    ok(&["extract", "--input", s(&raw), "--matrix", s(&var), "--mode", "variable", "--out", s(&vout)]);
    assert_eq!(json(&dir.path().join("v.bin.meta.json"))["bits"], 128);
}

#[test]
fn extract_rejects_matrix_of_wrong_mode() {
    let dir = TempDir::new().unwrap();
    let (raw, matrix) = (p(&dir, "f.bin"), p(&dir, "m.txt"));
    ok(&["simulate", "--out", s(&raw)]);
    ok(&["matrix-gen", "--out", s(&matrix)]);
    let out = run(&["extract", "--input", s(&raw), "--matrix", s(&matrix), "--mode", "variable", "--out", s(&p(&dir, "x"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("32"));
}

#[test]
fn pipeline_is_deterministic_and_battery_uses_scaled_threshold() {
    let dir = TempDir::new().unwrap();
    let matrix = p(&dir, "m.txt");
    ok(&["--seed", "1", "matrix-gen", "--out", s(&matrix)]);
    let mut extracted = Vec::new();
    for tag in ["a", "b"] {
        let raw = p(&dir, &format!("{tag}.raw"));
        let out = p(&dir, &format!("{tag}.bin"));
        ok(&["--seed", "2", "simulate", "--frames", "200", "--out", s(&raw)]);
        ok(&["extract", "--input", s(&raw), "--matrix", s(&matrix), "--out", s(&out)]);
        extracted.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(extracted[0], extracted[1]);

    let report = p(&dir, "report.json");
    let csv = p(&dir, "report.csv");
    let input = p(&dir, "a.bin");
    let out = run(&[
        "test", "--input", s(&input), "--sequence-len", "1000", "--sequences", "100", "--relaxed", "--out", s(&report),
        "--csv", s(&csv),
    ]);
    assert!(matches!(code(&out), 0 | 4));
    let report = &json(&report)["battery"];
    assert_eq!(report["pass_threshold"], 96);
    assert_eq!(report["sequences"], 100);
    assert!(std::fs::read_to_string(csv).unwrap().lines().count() > 1);
}

#[test]
fn battery_failure_exits_four() {
    let dir = TempDir::new().unwrap();
    let input = p(&dir, "zeros.bin");
    std::fs::write(&input, vec![0u8; 100 * 1000 / 8]).unwrap();
    let out = run(&["test", "--input", s(&input), "--sequence-len", "1000", "--relaxed"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn battery_with_too_little_data_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let input = p(&dir, "short.bin");
    std::fs::write(&input, [0x55u8; 10]).unwrap();
    let out = run(&["test", "--input", s(&input)]);
    assert_ne!(code(&out), 0);
}

#[test]
fn matrix_gen_is_seeded_and_entropy_checked() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (p(&dir, "a"), p(&dir, "b"), p(&dir, "c"));
    ok(&["--seed", "5", "matrix-gen", "--out", s(&a)]);
    ok(&["--seed", "5", "matrix-gen", "--out", s(&b)]);
    ok(&["--seed", "6", "matrix-gen", "--out", s(&c)]);
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    assert_ne!(a, std::fs::read(c).unwrap());

    let entropy = p(&dir, "e.bin");
    std::fs::write(&entropy, [0xa5u8; 64]).unwrap();
    let out = run(&["matrix-gen", "--entropy", s(&entropy), "--out", s(&p(&dir, "d"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("32768"));

    let raw = p(&dir, "raw.bin");
    ok(&["simulate", "--frames", "3", "--out", s(&raw)]);
    ok(&["matrix-gen", "--entropy", s(&raw), "--out", s(&p(&dir, "e"))]);
}

#[test]
fn bench_output_rate_scales_with_mode() {
    let dir = TempDir::new().unwrap();
    for (mode, k) in [("fixed", 32.0), ("variable", 8.0)] {
        let out = p(&dir, mode);
        ok(&["bench", "--mode", mode, "--bits", "1048576", "--seconds", "0.05", "--out", s(&out)]);
        let r = json(&out);
        let ratio = r["output_rate"].as_f64().unwrap() / r["raw_rate"].as_f64().unwrap();
        assert!((ratio - k / 1024.0).abs() < 1e-9, "{mode}: {ratio}");
    }
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let bad_key = write_profile(&dir, "a.profile", "bogus = 1\n");
    let out = run(&["--profile", s(&bad_key), "simulate", "--out", s(&p(&dir, "x"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let hot = write_profile(&dir, "b.profile", "rows = 4\ncols = 4\nhot_pixels = 3, 20\n");
    let out = run(&["--profile", s(&hot), "simulate", "--out", s(&p(&dir, "y"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("20"), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(code(&run(&["simulate"])), 2);
    assert_eq!(code(&run(&["certify", "--epsilon-exp", "-3"])), 2);
    let out = run(&["--profile", s(&p(&dir, "missing")), "simulate", "--out", s(&p(&dir, "z"))]);
    assert_eq!(code(&out), 1);
}
