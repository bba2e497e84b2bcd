//! `mxq` — generate, quantize, transform, and compare tensors from the
//! command line.
//!
//! Conventions shared by every subcommand:
//!
//! * stdout carries only machine-parsable results (`key=value` lines or
//!   CSV); diagnostics and timings go to stderr.
//! * all randomness flows through explicit `--seed` flags, so repeating
//!   an invocation reproduces its outputs bitwise.
//! * exit codes: 0 success; 1 for shape/domain errors in the data;
//!   2 for I/O, file-format, or flag-parse errors.
//!
//! Inputs ending in `.csv` are parsed as comma-separated text matrices;
//! everything else is read as MXTEN1 binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mxq_core::{
    apply_block_rotation, build_outlier_aware_rotation, dequantize_tensor_mx, format_sig9,
    generate_tensor, hadamard_rotation, load_quantized, load_tensor, load_tensor_csv,
    per_group_error, quantize_tensor_mx, run_pipeline, save_quantized, save_rotation,
    save_tensor, select_reference_block, summary_csv, ApplySide, BaseDistribution, Error,
    OutlierSpec, PipelineConfig, Result, Rotation, Tensor, TransformKind,
};

#[derive(Parser)]
#[command(
    name = "mxq",
    version,
    about = "MXFP4 microscaling quantization with outlier-taming transforms"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic tensor with controllable outliers.
    Gen(GenArgs),
    /// Quantize a tensor to MXFP4 groups and report its error.
    Quantize(QuantizeArgs),
    /// Reconstruct a tensor from an MXQ4 file.
    Dequantize(DequantizeArgs),
    /// Apply a block-diagonal rotation to a tensor.
    Rotate(RotateArgs),
    /// Measure per-group error between two tensors.
    Analyze(AnalyzeArgs),
    /// Run transform pipelines and summarize their errors as CSV.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Normal,
    Uniform,
}

#[derive(Args)]
struct GenArgs {
    /// Number of rows.
    #[arg(long)]
    rows: usize,
    /// Number of columns.
    #[arg(long)]
    cols: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of columns to scale as persistent channel outliers.
    #[arg(long, default_value_t = 0.0)]
    normal_fraction: f32,
    /// Multiplier for outlier channels.
    #[arg(long = "normal-mag", default_value_t = 1.0)]
    normal_mag: f32,
    /// Number of individual cells to scale as massive outliers.
    #[arg(long, default_value_t = 0)]
    massive_count: usize,
    /// Multiplier for massive cells.
    #[arg(long = "massive-mag", default_value_t = 1.0)]
    massive_mag: f32,
    /// Base distribution.
    #[arg(long, value_enum, default_value_t = DistArg::Normal)]
    dist: DistArg,
    /// Output MXTEN1 path.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Input tensor (MXTEN1, or CSV by extension).
    #[arg(short = 'i', long = "input")]
    input: PathBuf,
    /// Output MXQ4 path.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    /// Elements per shared-scale group.
    #[arg(long, default_value_t = 32)]
    group_size: usize,
}

#[derive(Args)]
struct DequantizeArgs {
    /// Input MXQ4 path.
    #[arg(short = 'i', long = "input")]
    input: PathBuf,
    /// Output MXTEN1 path.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RotateKindArg {
    Hadamard,
    OutlierAware,
}

#[derive(Args)]
struct RotateArgs {
    /// Input tensor (MXTEN1, or CSV by extension).
    #[arg(short = 'i', long = "input")]
    input: PathBuf,
    /// Rotation construction.
    #[arg(long, value_enum)]
    kind: RotateKindArg,
    /// Calibration tensor the outlier-aware builder learns from.
    #[arg(long, required_if_eq("kind", "outlier-aware"))]
    calib: Option<PathBuf>,
    /// Greedy step budget for the outlier-aware builder.
    #[arg(long, default_value_t = 128)]
    max_steps: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable the Hadamard sign randomization.
    #[arg(long = "no-signs", default_value_t = false)]
    no_signs: bool,
    /// Apply the transposed (inverse) rotation.
    #[arg(long, default_value_t = false)]
    inverse: bool,
    /// Also write the rotation as JSON.
    #[arg(long = "emit-rotation")]
    emit_rotation: Option<PathBuf>,
    /// Rotation block width.
    #[arg(long, default_value_t = 32)]
    block_size: usize,
    /// Output MXTEN1 path.
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Original tensor.
    #[arg(long)]
    orig: PathBuf,
    /// Reconstructed tensor to compare against it.
    #[arg(long)]
    recon: PathBuf,
    /// Elements per group.
    #[arg(long, default_value_t = 32)]
    group_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Original,
    Hadamard,
    DuquantSingle,
    DuquantDual,
}

impl From<PipelineArg> for TransformKind {
    fn from(p: PipelineArg) -> TransformKind {
        match p {
            PipelineArg::Original => TransformKind::Original,
            PipelineArg::Hadamard => TransformKind::Hadamard,
            PipelineArg::DuquantSingle => TransformKind::DuquantSingle,
            PipelineArg::DuquantDual => TransformKind::DuquantDual,
        }
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Activation tensor (MXTEN1, or CSV by extension).
    #[arg(long)]
    act: PathBuf,
    /// Weight tensor (MXTEN1, or CSV by extension).
    #[arg(long)]
    weight: PathBuf,
    /// Comma-separated pipelines to run.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pipelines: Vec<PipelineArg>,
    /// Smoothing strength for the duquant pipelines.
    #[arg(long, default_value_t = 0.5)]
    alpha: f32,
    /// RNG seed shared by all pipelines.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Greedy step budget per rotation build.
    #[arg(long, default_value_t = 128)]
    max_steps: usize,
    /// Rotation block width and quantization group size.
    #[arg(long, default_value_t = 32)]
    block_size: usize,
    /// Write the CSV here instead of stdout.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    /// Directory for per-pipeline JSON reports.
    #[arg(long)]
    reports: Option<PathBuf>,
}

/// Loads MXTEN1 by default, CSV when the extension says so.
fn load_input(path: &Path) -> Result<Tensor> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        load_tensor_csv(path)
    } else {
        load_tensor(path)
    }
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let spec = OutlierSpec {
        normal_fraction: args.normal_fraction,
        normal_magnitude: args.normal_mag,
        massive_count: args.massive_count,
        massive_magnitude: args.massive_mag,
        base: match args.dist {
            DistArg::Normal => BaseDistribution::StandardNormal,
            DistArg::Uniform => BaseDistribution::UniformSymmetric,
        },
    };
    let t = generate_tensor(args.rows, args.cols, args.seed, &spec)?;
    save_tensor(&t, &args.output)?;
    let outlier_cols = (spec.normal_fraction as f64 * args.cols as f64).floor() as usize;
    println!(
        "rows={} cols={} seed={} outlier_cols={outlier_cols} massive_cells={} path={}",
        t.rows(),
        t.cols(),
        args.seed,
        spec.massive_count,
        args.output.display()
    );
    Ok(())
}

fn cmd_quantize(args: &QuantizeArgs) -> Result<()> {
    let t = load_input(&args.input)?;
    let start = Instant::now();
    let q = quantize_tensor_mx(&t, args.group_size)?;
    eprintln!(
        "quantized {}x{} in {:.1} ms",
        t.rows(),
        t.cols(),
        start.elapsed().as_secs_f64() * 1e3
    );
    save_quantized(&q, &args.output)?;
    let rec = dequantize_tensor_mx(&q);
    let stats = per_group_error(&t, &rec, args.group_size)?;
    println!(
        "rows={} cols={} group_size={} groups={} mean_err={} max_err={} path={}",
        t.rows(),
        t.cols(),
        args.group_size,
        stats.num_groups,
        format_sig9(stats.mean),
        format_sig9(stats.max),
        args.output.display()
    );
    Ok(())
}

fn cmd_dequantize(args: &DequantizeArgs) -> Result<()> {
    let q = load_quantized(&args.input)?;
    let t = dequantize_tensor_mx(&q);
    save_tensor(&t, &args.output)?;
    println!(
        "rows={} cols={} path={}",
        t.rows(),
        t.cols(),
        args.output.display()
    );
    Ok(())
}

fn build_cli_rotation(args: &RotateArgs) -> Result<Rotation> {
    match args.kind {
        RotateKindArg::Hadamard => {
            hadamard_rotation(args.block_size, args.seed, !args.no_signs)
        }
        RotateKindArg::OutlierAware => {
            // clap enforces --calib for this kind.
            let calib = load_input(args.calib.as_ref().expect("clap guards --calib"))?;
            let ref_block = select_reference_block(&calib, args.block_size)?;
            build_outlier_aware_rotation(
                &calib.column_block(ref_block, args.block_size)?,
                args.seed,
                args.max_steps,
            )
        }
    }
}

fn cmd_rotate(args: &RotateArgs) -> Result<()> {
    let t = load_input(&args.input)?;
    let start = Instant::now();
    let rot = build_cli_rotation(args)?;
    eprintln!(
        "built {:?} rotation (block {}, {} steps) in {:.1} ms",
        rot.provenance,
        rot.block_size,
        rot.steps_used,
        start.elapsed().as_secs_f64() * 1e3
    );
    if let Some(path) = &args.emit_rotation {
        save_rotation(&rot, path)?;
    }
    let applied = if args.inverse { rot.transposed() } else { rot.clone() };
    let out = apply_block_rotation(&t, &applied, ApplySide::ActivationRight)?;
    save_tensor(&out, &args.output)?;
    println!(
        "rows={} cols={} block_size={} kind={} steps_used={} inverse={} path={}",
        out.rows(),
        out.cols(),
        rot.block_size,
        rot.provenance.name(),
        rot.steps_used,
        args.inverse,
        args.output.display()
    );
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let orig = load_input(&args.orig)?;
    let recon = load_input(&args.recon)?;
    let stats = per_group_error(&orig, &recon, args.group_size)?;
    println!(
        "group_size={} groups={} mean_err={} max_err={}",
        args.group_size,
        stats.num_groups,
        format_sig9(stats.mean),
        format_sig9(stats.max)
    );
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let x = load_input(&args.act)?;
    let w = load_input(&args.weight)?;
    let mut reports = Vec::with_capacity(args.pipelines.len());
    for &p in &args.pipelines {
        let config = PipelineConfig {
            transform: p.into(),
            alpha: args.alpha,
            block_size: args.block_size,
            max_steps: args.max_steps,
            seed: args.seed,
            randomize_hadamard_signs: true,
        };
        let start = Instant::now();
        let report = run_pipeline(&x, &w, &config)?;
        eprintln!(
            "{}: transform {:.1} ms, quantize {:.1} ms, analyze {:.1} ms (total {:.1} ms)",
            config.transform.name(),
            report.timings.transform_ms,
            report.timings.quantize_ms,
            report.timings.analyze_ms,
            start.elapsed().as_secs_f64() * 1e3
        );
        reports.push(report);
    }
    if let Some(dir) = &args.reports {
        std::fs::create_dir_all(dir)?;
        for report in &reports {
            let path = dir.join(format!("{}.json", report.config.transform.name()));
            let json = serde_json::to_string_pretty(report)
                .map_err(|e| Error::Format(format!("failed to encode report: {e}")))?;
            std::fs::write(path, json)?;
        }
    }
    let csv = summary_csv(&reports);
    match &args.output {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn real_main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen(args) => cmd_gen(&args),
        Cmd::Quantize(args) => cmd_quantize(&args),
        Cmd::Dequantize(args) => cmd_dequantize(&args),
        Cmd::Rotate(args) => cmd_rotate(&args),
        Cmd::Analyze(args) => cmd_analyze(&args),
        Cmd::Compare(args) => cmd_compare(&args),
    }
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e}");
        let code = match e {
            Error::Shape(_) | Error::Domain(_) => 1,
            Error::Format(_) | Error::Io(_) => 2,
        };
        std::process::exit(code);
    }
}
