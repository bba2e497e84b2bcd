//! End-to-end behavior tests for the `mxq` binary: stdout contracts,
//! exit codes, file handoff between subcommands, and transform effects
//! observable through the CLI alone.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mxq_core::{load_rotation, load_tensor, Tensor};

fn mxq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mxq"))
}

/// Runs the binary with `args` in `dir`, asserting success, and returns
/// stdout as a string.
fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = mxq()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn mxq");
    assert!(
        out.status.success(),
        "mxq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("stdout is not UTF-8")
}

/// Runs the binary without asserting on the outcome.
fn run_raw(dir: &Path, args: &[&str]) -> Output {
    mxq()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn mxq")
}

/// Extracts the value of a `key=value` token from a stdout line.
fn field<'a>(line: &'a str, key: &str) -> &'a str {
    let prefix = format!("{key}=");
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no field `{key}` in line `{line}`"))
}

#[test]
fn gen_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gen", "--rows", "8", "--cols", "32", "--seed", "42", "--normal-fraction", "0.1",
        "--massive-count", "2",
    ];
    run_ok(dir.path(), &[&args[..], &["-o", "a.mxt"]].concat());
    run_ok(dir.path(), &[&args[..], &["-o", "b.mxt"]].concat());
    let a = fs::read(dir.path().join("a.mxt")).unwrap();
    let b = fs::read(dir.path().join("b.mxt")).unwrap();
    assert_eq!(a, b, "identical gen flags must write identical bytes");
}

#[test]
fn gen_reports_injected_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok(
        dir.path(),
        &[
            "gen", "--rows", "64", "--cols", "32", "--seed", "9", "--normal-fraction", "0.1",
            "--massive-count", "2", "-o", "w.mxt",
        ],
    );
    let line = stdout.lines().next().unwrap();
    assert_eq!(field(line, "rows"), "64");
    assert_eq!(field(line, "cols"), "32");
    // 10% of 32 columns, truncated.
    assert_eq!(field(line, "outlier_cols"), "3");
    assert_eq!(field(line, "massive_cells"), "2");
}

#[test]
fn gen_rejects_oversized_massive_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_raw(
        dir.path(),
        &["gen", "--rows", "2", "--cols", "32", "--massive-count", "1000", "-o", "no.mxt"],
    );
    assert_eq!(out.status.code(), Some(1), "data-domain failures exit 1");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:"), "stderr should carry the message: {stderr}");
    assert!(!dir.path().join("no.mxt").exists());
}

#[test]
fn missing_output_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_raw(dir.path(), &["quantize", "-i", "a.mxt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_pipeline_name_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_raw(
        dir.path(),
        &["compare", "--act", "a.mxt", "--weight", "w.mxt", "--pipelines", "frobnicate"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outlier_aware_rotation_requires_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_raw(
        dir.path(),
        &["rotate", "-i", "a.mxt", "--kind", "outlier-aware", "-o", "b.mxt"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quantize_reports_group_layout() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["gen", "--rows", "2", "--cols", "64", "--seed", "1", "-o", "a.mxt"]);
    let stdout = run_ok(dir.path(), &["quantize", "-i", "a.mxt", "-o", "a.mxq"]);
    let line = stdout.lines().next().unwrap();
    assert_eq!(field(line, "group_size"), "32");
    assert_eq!(field(line, "groups"), "4");
    assert_eq!(field(line, "path"), "a.mxq");
}

#[test]
fn requantizing_a_reconstruction_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["gen", "--rows", "6", "--cols", "96", "--seed", "3", "-o", "a.mxt"]);
    run_ok(dir.path(), &["quantize", "-i", "a.mxt", "-o", "a.mxq"]);
    run_ok(dir.path(), &["dequantize", "-i", "a.mxq", "-o", "rec.mxt"]);
    run_ok(dir.path(), &["quantize", "-i", "rec.mxt", "-o", "rec.mxq"]);
    let first = fs::read(dir.path().join("a.mxq")).unwrap();
    let second = fs::read(dir.path().join("rec.mxq")).unwrap();
    assert_eq!(first, second, "quantize(dequantize(q)) must reproduce q exactly");
}

#[test]
fn all_zero_csv_input_quantizes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let row = vec!["0.0"; 32].join(",");
    fs::write(dir.path().join("zeros.csv"), format!("{row}\n{row}\n")).unwrap();
    let stdout = run_ok(dir.path(), &["quantize", "-i", "zeros.csv", "-o", "z.mxq"]);
    let line = stdout.lines().next().unwrap();
    assert_eq!(field(line, "mean_err"), "0.00000000e0");
    assert_eq!(field(line, "max_err"), "0.00000000e0");
}

#[test]
fn csv_and_binary_inputs_quantize_identically() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["gen", "--rows", "3", "--cols", "64", "--seed", "17", "-o", "a.mxt"]);
    let t = load_tensor(&dir.path().join("a.mxt")).unwrap();
    let mut csv = String::new();
    for r in 0..t.rows() {
        let row: Vec<String> = (0..t.cols()).map(|c| format!("{}", t.get(r, c))).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    fs::write(dir.path().join("a.csv"), csv).unwrap();
    run_ok(dir.path(), &["quantize", "-i", "a.mxt", "-o", "bin.mxq"]);
    run_ok(dir.path(), &["quantize", "-i", "a.csv", "-o", "csv.mxq"]);
    let from_bin = fs::read(dir.path().join("bin.mxq")).unwrap();
    let from_csv = fs::read(dir.path().join("csv.mxq")).unwrap();
    assert_eq!(from_bin, from_csv);
}

#[test]
fn signs_off_hadamard_concentrates_constant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let row = vec!["1.0"; 64].join(",");
    fs::write(dir.path().join("ones.csv"), format!("{row}\n{row}\n")).unwrap();
    run_ok(
        dir.path(),
        &["rotate", "-i", "ones.csv", "--kind", "hadamard", "--no-signs", "-o", "out.mxt"],
    );
    let out = load_tensor(&dir.path().join("out.mxt")).unwrap();
    let spike = (32.0f64).sqrt();
    for r in 0..out.rows() {
        for block in 0..2 {
            for j in 0..32 {
                let v = out.get(r, block * 32 + j) as f64;
                if j == 0 {
                    assert!((v - spike).abs() < 1e-5, "expected spike {spike}, got {v}");
                } else {
                    assert!(v.abs() < 1e-5, "expected 0 away from the spike, got {v}");
                }
            }
        }
    }
}

#[test]
fn inverse_rotation_recovers_the_input() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["gen", "--rows", "4", "--cols", "64", "--seed", "11", "-o", "a.mxt"]);
    run_ok(
        dir.path(),
        &["rotate", "-i", "a.mxt", "--kind", "hadamard", "--seed", "5", "-o", "r.mxt"],
    );
    run_ok(
        dir.path(),
        &["rotate", "-i", "r.mxt", "--kind", "hadamard", "--seed", "5", "--inverse", "-o",
          "back.mxt"],
    );
    let a = load_tensor(&dir.path().join("a.mxt")).unwrap();
    let back = load_tensor(&dir.path().join("back.mxt")).unwrap();
    let worst = worst_abs_diff(&a, &back);
    assert!(worst < 1e-5, "inverse rotation drifted by {worst}");
}

#[test]
fn emitted_rotation_reloads_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["gen", "--rows", "4", "--cols", "64", "--seed", "2", "--massive-count", "2",
          "--massive-mag", "100", "-o", "a.mxt"],
    );
    let stdout = run_ok(
        dir.path(),
        &["rotate", "-i", "a.mxt", "--kind", "outlier-aware", "--calib", "a.mxt",
          "--emit-rotation", "r.json", "-o", "rot.mxt"],
    );
    let line = stdout.lines().next().unwrap();
    let kind = field(line, "kind");
    assert!(
        kind == "outlier-aware" || kind == "identity",
        "unexpected provenance `{kind}`"
    );
    let rot = load_rotation(&dir.path().join("r.json")).unwrap();
    assert_eq!(rot.block_size, 32);
    assert!(rot.orthogonality_error() <= 1e-5);
}

#[test]
fn analyze_matches_quantize_statistics() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["gen", "--rows", "5", "--cols", "64", "--seed", "8", "-o", "a.mxt"]);
    let q = run_ok(dir.path(), &["quantize", "-i", "a.mxt", "-o", "a.mxq"]);
    run_ok(dir.path(), &["dequantize", "-i", "a.mxq", "-o", "rec.mxt"]);
    let a = run_ok(dir.path(), &["analyze", "--orig", "a.mxt", "--recon", "rec.mxt"]);
    let q_line = q.lines().next().unwrap();
    let a_line = a.lines().next().unwrap();
    assert_eq!(field(q_line, "mean_err"), field(a_line, "mean_err"));
    assert_eq!(field(q_line, "max_err"), field(a_line, "max_err"));
    assert_eq!(field(a_line, "groups"), "10");
}

#[test]
fn analyze_rejects_mismatched_shapes() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(dir.path(), &["gen", "--rows", "2", "--cols", "64", "--seed", "1", "-o", "a.mxt"]);
    run_ok(dir.path(), &["gen", "--rows", "4", "--cols", "64", "--seed", "1", "-o", "b.mxt"]);
    let out = run_raw(dir.path(), &["analyze", "--orig", "a.mxt", "--recon", "b.mxt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_emits_frozen_header_and_one_row_per_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    gen_compare_inputs(dir.path());
    let stdout = run_ok(
        dir.path(),
        &["compare", "--act", "a.mxt", "--weight", "w.mxt", "--pipelines",
          "original,hadamard", "--seed", "1"],
    );
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(
        lines[0],
        "pipeline,alpha,block_size,max_steps,seed,act_mean_err,act_max_err,wt_mean_err,\
         wt_max_err,gemm_rel_err,rot_apply_count"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("original,0.5,32,128,1,"));
    assert!(lines[2].starts_with("hadamard,0.5,32,128,1,"));
}

#[test]
fn compare_csv_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    gen_compare_inputs(dir.path());
    let args = [
        "compare", "--act", "a.mxt", "--weight", "w.mxt", "--pipelines",
        "original,duquant-single", "--alpha", "0.75", "--seed", "4",
    ];
    let stdout = run_ok(dir.path(), &args);
    run_ok(dir.path(), &[&args[..], &["-o", "out.csv"]].concat());
    let file = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(stdout, file);
}

#[test]
fn compare_reports_directory_holds_full_reports() {
    let dir = tempfile::tempdir().unwrap();
    gen_compare_inputs(dir.path());
    run_ok(
        dir.path(),
        &["compare", "--act", "a.mxt", "--weight", "w.mxt", "--pipelines",
          "original,duquant-dual", "--reports", "reports", "-o", "out.csv"],
    );
    for name in ["original", "duquant-dual"] {
        let path = dir.path().join("reports").join(format!("{name}.json"));
        let text = fs::read_to_string(&path).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["config"]["transform"], name);
        assert!(json["activation_stats"]["per_group"].is_array());
        assert!(json.get("timings").is_none(), "wall-clock times must stay out of reports");
    }
    let csv = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().ends_with(",2"), "dual pipeline applies two rotations");
}

/// Generates a matched activation/weight pair sized for every pipeline.
fn gen_compare_inputs(dir: &Path) {
    run_ok(dir, &["gen", "--rows", "8", "--cols", "64", "--seed", "7", "-o", "a.mxt"]);
    run_ok(dir, &["gen", "--rows", "64", "--cols", "32", "--seed", "9", "-o", "w.mxt"]);
}

fn worst_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut worst = 0.0f32;
    for r in 0..a.rows() {
        for c in 0..a.cols() {
            worst = worst.max((a.get(r, c) - b.get(r, c)).abs());
        }
    }
    worst
}
