//! Acceptance gate for the CLI: criterion 10 — every invocation repeated
//! with identical flags writes bitwise-identical files and CSV, and the
//! binary tensor / quantized-tensor / rotation-JSON formats round-trip
//! exactly. Prints a single `acceptance 10 ...: PASS`/`FAIL` line
//! (visible with `cargo test -- --nocapture`, or on failure). The
//! library-side criteria (1–9) live in the core crate's `acceptance`
//! test target.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mxq_core::{load_rotation, load_tensor, save_rotation, save_tensor};

fn verdict(label: &str, pass: bool, detail: &str) {
    let state = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {label}: {state}{}{}", if detail.is_empty() { "" } else { " — " }, detail);
    assert!(pass, "acceptance {label} failed — {detail}");
}

/// Runs the binary in `dir`, asserting success, and returns stdout.
fn run(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_mxq"))
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

/// Runs the same invocation twice with only the output path(s) renamed,
/// then asserts the named output pairs are byte-identical and the two
/// stdout captures agree after the paths are substituted back.
fn assert_twin_run(dir: &Path, args: &[&str], outputs: &[(&str, &str)]) {
    let second: Vec<String> = args
        .iter()
        .map(|a| {
            outputs
                .iter()
                .find(|(first, _)| a == first)
                .map_or_else(|| a.to_string(), |(_, renamed)| renamed.to_string())
        })
        .collect();
    let second: Vec<&str> = second.iter().map(String::as_str).collect();
    let stdout_a = run(dir, args);
    let stdout_b = run(dir, &second);
    for (first, renamed) in outputs {
        let a = fs::read(dir.join(first)).unwrap();
        let b = fs::read(dir.join(renamed)).unwrap();
        assert_eq!(a, b, "`{}` and `{}` differ for mxq {args:?}", first, renamed);
    }
    let mut normalized = stdout_b;
    for (first, renamed) in outputs {
        normalized = normalized.replace(renamed, first);
    }
    assert_eq!(stdout_a, normalized, "stdout differs between repeated runs of mxq {args:?}");
}

/// Criterion 10: CLI determinism and exact file-format round-trips,
/// within a 30-second budget.
#[test]
fn c10_cli_determinism_and_round_trips() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut pairs = 0usize;

    // Every subcommand, run twice with identical flags.
    assert_twin_run(
        dir,
        &["gen", "--rows", "128", "--cols", "256", "--seed", "1", "--normal-fraction", "0.005",
          "--normal-mag", "10", "--massive-count", "2", "--massive-mag", "100", "-o", "a.mxt"],
        &[("a.mxt", "a2.mxt")],
    );
    pairs += 1;
    assert_twin_run(
        dir,
        &["gen", "--rows", "256", "--cols", "64", "--seed", "101", "-o", "w.mxt"],
        &[("w.mxt", "w2.mxt")],
    );
    pairs += 1;
    assert_twin_run(
        dir,
        &["quantize", "-i", "a.mxt", "-o", "a.mxq"],
        &[("a.mxq", "a2.mxq")],
    );
    pairs += 1;
    assert_twin_run(
        dir,
        &["dequantize", "-i", "a.mxq", "-o", "rec.mxt"],
        &[("rec.mxt", "rec2.mxt")],
    );
    pairs += 1;
    assert_twin_run(
        dir,
        &["rotate", "-i", "a.mxt", "--kind", "hadamard", "--seed", "3", "--emit-rotation",
          "rh.json", "-o", "rot.mxt"],
        &[("rot.mxt", "rot2.mxt"), ("rh.json", "rh2.json")],
    );
    pairs += 1;
    assert_twin_run(
        dir,
        &["rotate", "-i", "a.mxt", "--kind", "outlier-aware", "--calib", "a.mxt", "--seed", "5",
          "--emit-rotation", "ro.json", "-o", "oaw.mxt"],
        &[("oaw.mxt", "oaw2.mxt"), ("ro.json", "ro2.json")],
    );
    pairs += 1;
    let analyze_a = run(dir, &["analyze", "--orig", "a.mxt", "--recon", "rec.mxt"]);
    let analyze_b = run(dir, &["analyze", "--orig", "a.mxt", "--recon", "rec.mxt"]);
    assert_eq!(analyze_a, analyze_b);
    pairs += 1;
    assert_twin_run(
        dir,
        &["compare", "--act", "a.mxt", "--weight", "w.mxt", "--pipelines",
          "original,hadamard,duquant-single,duquant-dual", "--alpha", "0.75", "--seed", "1",
          "-o", "cmp.csv", "--reports", "r1"],
        &[("cmp.csv", "cmp2.csv")],
    );
    for name in ["original", "hadamard", "duquant-single", "duquant-dual"] {
        let a = fs::read(dir.join("r1").join(format!("{name}.json"))).unwrap();
        run(dir, &["compare", "--act", "a.mxt", "--weight", "w.mxt", "--pipelines", name,
                   "--alpha", "0.75", "--seed", "1", "--reports", "r3", "-o", "one.csv"]);
        let b = fs::read(dir.join("r3").join(format!("{name}.json"))).unwrap();
        assert_eq!(a, b, "per-pipeline report for `{name}` is not reproducible");
    }
    pairs += 1;

    // Round-trip exactness through the on-disk formats.
    let tensor = load_tensor(dir.join("a.mxt")).unwrap();
    save_tensor(&tensor, dir.join("a_copy.mxt")).unwrap();
    let tensor_exact =
        fs::read(dir.join("a.mxt")).unwrap() == fs::read(dir.join("a_copy.mxt")).unwrap();

    run(dir, &["quantize", "-i", "rec.mxt", "-o", "rec.mxq"]);
    let quant_exact =
        fs::read(dir.join("a.mxq")).unwrap() == fs::read(dir.join("rec.mxq")).unwrap();

    let mut rotation_exact = true;
    for name in ["rh.json", "ro.json"] {
        let rot = load_rotation(dir.join(name)).unwrap();
        let copy = dir.join(format!("copy_{name}"));
        save_rotation(&rot, &copy).unwrap();
        rotation_exact &= fs::read(dir.join(name)).unwrap() == fs::read(copy).unwrap();
    }

    let elapsed = started.elapsed().as_secs_f64();
    let pass = tensor_exact && quant_exact && rotation_exact && elapsed < 30.0;
    verdict(
        "10 (CLI determinism & serialization)",
        pass,
        &format!(
            "{pairs} invocation pairs bitwise-identical; round-trips exact: \
             tensor={tensor_exact} quantized={quant_exact} rotation={rotation_exact}; \
             {elapsed:.1}s (budget 30s)"
        ),
    );
}
