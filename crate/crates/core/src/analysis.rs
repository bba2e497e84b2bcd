//! Error-analysis harness: runs a transform pipeline, quantizes the
//! transformed pair to MXFP4, and measures per-group and end-to-end
//! error against the untransformed full-precision product.
//!
//! Reports serialize to JSON with deterministic content: wall-clock
//! timings are kept in memory for diagnostics but never serialized, so
//! repeated identical runs produce bitwise-identical artifacts.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{dequantize_tensor_mx, quantize_tensor_mx};
use crate::error::{Error, Result};
use crate::linalg::{frobenius, matmul_f64};
use crate::seeds::derive_seed;
use crate::tensor::Tensor;
use crate::transforms::{
    apply_block_rotation, apply_smooth, build_outlier_aware_rotation, compute_smooth_scale,
    dual_rotation_pipeline, fuse_into_weight, hadamard_rotation, select_reference_block,
    ApplySide, CalibStats,
};

/// Which transform pipeline to run before quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    /// Quantize the raw pair; the no-transform baseline.
    Original,
    /// Sign-randomized block Hadamard rotation (no smoothing).
    Hadamard,
    /// Smooth scaling plus one shared outlier-aware rotation.
    DuquantSingle,
    /// Smooth scaling plus rotate / zigzag-permute / rotate.
    DuquantDual,
}

impl TransformKind {
    /// Every pipeline, in canonical comparison order.
    pub const ALL: [TransformKind; 4] = [
        TransformKind::Original,
        TransformKind::Hadamard,
        TransformKind::DuquantSingle,
        TransformKind::DuquantDual,
    ];

    /// Stable machine name (matches the serialized form).
    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::Original => "original",
            TransformKind::Hadamard => "hadamard",
            TransformKind::DuquantSingle => "duquant-single",
            TransformKind::DuquantDual => "duquant-dual",
        }
    }

    /// Parses a machine name back into a kind.
    pub fn parse(name: &str) -> Result<TransformKind> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                Error::domain(format!(
                    "unknown pipeline {name:?} (expected one of: original, hadamard, \
                     duquant-single, duquant-dual)"
                ))
            })
    }
}

/// Full configuration of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Transform to apply before quantization.
    pub transform: TransformKind,
    /// Smoothing strength for the duquant pipelines (ignored elsewhere).
    pub alpha: f32,
    /// Rotation block width and quantization group size.
    pub block_size: usize,
    /// Greedy step budget per rotation build.
    pub max_steps: usize,
    /// Seed for every random choice in the run.
    pub seed: u64,
    /// Whether the Hadamard baseline randomizes its sign diagonal.
    pub randomize_hadamard_signs: bool,
}

impl PipelineConfig {
    /// A configuration with conventional defaults for `transform`.
    pub fn new(transform: TransformKind) -> Self {
        PipelineConfig {
            transform,
            alpha: 0.5,
            block_size: 32,
            max_steps: 128,
            seed: 0,
            randomize_hadamard_signs: true,
        }
    }
}

/// Relative reconstruction error per quantization group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupErrorStats {
    /// `||rec_g - orig_g||_2 / ||orig_g||_2` per group, row-major group
    /// order; groups with zero original norm record 0.
    pub per_group: Vec<f64>,
    /// Mean over groups with nonzero original norm.
    pub mean: f64,
    /// Largest per-group error.
    pub max: f64,
    /// Total number of groups (including zero-norm ones).
    pub num_groups: usize,
}

/// A relative (or, for a zero reference, absolute) Frobenius error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GemmError {
    pub value: f64,
    /// True when the reference product had zero norm and `value` is the
    /// absolute Frobenius error instead of a ratio.
    pub is_absolute: bool,
}

/// Wall-clock phase durations, for diagnostics only. Never serialized,
/// so report artifacts stay bitwise deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub transform_ms: f64,
    pub quantize_ms: f64,
    pub analyze_ms: f64,
}

/// Everything measured from one pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    /// The configuration that produced this report.
    pub config: PipelineConfig,
    /// Per-group error of the transformed, quantized activations.
    pub activation_stats: GroupErrorStats,
    /// Per-group error of the transformed, quantized weights.
    pub weight_stats: GroupErrorStats,
    /// End-to-end product error versus the untransformed full-precision
    /// product.
    pub gemm_relative_error: f64,
    /// True when the reference product had zero norm (see [`GemmError`]).
    pub gemm_error_is_absolute: bool,
    /// Number of rotation applications the transform used per tensor.
    pub rot_apply_count: u32,
    /// Number of permutation applications the transform used per tensor.
    pub perm_apply_count: u32,
    /// Phase timings (in-memory only).
    #[serde(skip)]
    pub timings: PhaseTimings,
}

/// Measures the relative L2 error of `rec` against `orig` over contiguous
/// row groups of `group_size`. Both tensors must share a shape whose
/// column count `group_size` divides. Arithmetic is f64 throughout.
pub fn per_group_error(orig: &Tensor, rec: &Tensor, group_size: usize) -> Result<GroupErrorStats> {
    if orig.rows() != rec.rows() || orig.cols() != rec.cols() {
        return Err(Error::shape(format!(
            "tensors disagree on shape: {}x{} vs {}x{}",
            orig.rows(),
            orig.cols(),
            rec.rows(),
            rec.cols()
        )));
    }
    if group_size == 0 || orig.cols() % group_size != 0 {
        return Err(Error::shape(format!(
            "group size {group_size} does not divide {} columns",
            orig.cols()
        )));
    }
    let groups_per_row = orig.cols() / group_size;
    let num_groups = orig.rows() * groups_per_row;
    let mut per_group = Vec::with_capacity(num_groups);
    let mut sum = 0.0f64;
    let mut counted = 0usize;
    let mut max = 0.0f64;
    for r in 0..orig.rows() {
        let orow = orig.row(r);
        let rrow = rec.row(r);
        for g in 0..groups_per_row {
            let o = &orow[g * group_size..(g + 1) * group_size];
            let q = &rrow[g * group_size..(g + 1) * group_size];
            let mut dn = 0.0f64;
            let mut on = 0.0f64;
            for (&ov, &qv) in o.iter().zip(q) {
                let d = qv as f64 - ov as f64;
                dn += d * d;
                on += ov as f64 * ov as f64;
            }
            let err = if on == 0.0 { 0.0 } else { (dn / on).sqrt() };
            if on != 0.0 {
                sum += err;
                counted += 1;
            }
            if err > max {
                max = err;
            }
            per_group.push(err);
        }
    }
    let mean = if counted == 0 { 0.0 } else { sum / counted as f64 };
    Ok(GroupErrorStats {
        per_group,
        mean,
        max,
        num_groups,
    })
}

/// Frobenius error of `approx` against `reference` (flat row-major
/// products of equal length). Relative when the reference has nonzero
/// norm, absolute otherwise.
pub fn gemm_relative_error(approx: &[f64], reference: &[f64]) -> GemmError {
    debug_assert_eq!(approx.len(), reference.len());
    let diff: Vec<f64> = approx
        .iter()
        .zip(reference)
        .map(|(a, r)| a - r)
        .collect();
    let dn = frobenius(&diff);
    let rn = frobenius(reference);
    if rn == 0.0 {
        GemmError {
            value: dn,
            is_absolute: true,
        }
    } else {
        GemmError {
            value: dn / rn,
            is_absolute: false,
        }
    }
}

fn validate_pair(x: &Tensor, w: &Tensor, block_size: usize) -> Result<()> {
    if x.cols() != w.rows() {
        return Err(Error::shape(format!(
            "activation columns ({}) must match weight rows ({})",
            x.cols(),
            w.rows()
        )));
    }
    if block_size == 0 || x.cols() % block_size != 0 || w.cols() % block_size != 0 {
        return Err(Error::shape(format!(
            "block size {block_size} must divide activation columns ({}) and weight columns ({})",
            x.cols(),
            w.cols()
        )));
    }
    Ok(())
}

/// Runs one pipeline end to end: transform, quantize both tensors to
/// MXFP4 groups of `config.block_size`, dequantize, and measure errors
/// against the untransformed full-precision product.
pub fn run_pipeline(x: &Tensor, w: &Tensor, config: &PipelineConfig) -> Result<PipelineReport> {
    validate_pair(x, w, config.block_size)?;
    let b = config.block_size;

    let t0 = Instant::now();
    let (xt, wt, rot_apply_count, perm_apply_count) = match config.transform {
        TransformKind::Original => (x.clone(), w.clone(), 0u32, 0u32),
        TransformKind::Hadamard => {
            let rot = hadamard_rotation(b, config.seed, config.randomize_hadamard_signs)?;
            let xt = apply_block_rotation(x, &rot, ApplySide::ActivationRight)?;
            let wt = apply_block_rotation(w, &rot, ApplySide::WeightLeftTranspose)?;
            (xt, wt, 1, 0)
        }
        TransformKind::DuquantSingle => {
            let stats = CalibStats::collect(x, w)?;
            let scale = compute_smooth_scale(&stats, config.alpha)?;
            let (xs, _) = apply_smooth(x, w, &scale)?;
            let ref_block = select_reference_block(&xs, b)?;
            let rot = build_outlier_aware_rotation(
                &xs.column_block(ref_block, b)?,
                derive_seed(config.seed, 1),
                config.max_steps,
            )?;
            let xt = apply_block_rotation(&xs, &rot, ApplySide::ActivationRight)?;
            // Smoothing and rotation land on the weights in one fused
            // f64 pass, with no intermediate f32 rounding.
            let wt = fuse_into_weight(w, &scale.lambda, &rot)?;
            (xt, wt, 1, 0)
        }
        TransformKind::DuquantDual => {
            let stats = CalibStats::collect(x, w)?;
            let scale = compute_smooth_scale(&stats, config.alpha)?;
            let (xs, ws) = apply_smooth(x, w, &scale)?;
            let out = dual_rotation_pipeline(&xs, &ws, b, config.seed, config.max_steps)?;
            (out.x, out.w, 2, 1)
        }
    };
    let transform_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    let xq = quantize_tensor_mx(&xt, b)?;
    let wq = quantize_tensor_mx(&wt, b)?;
    let xr = dequantize_tensor_mx(&xq);
    let wr = dequantize_tensor_mx(&wq);
    let quantize_ms = t1.elapsed().as_secs_f64() * 1e3;

    let t2 = Instant::now();
    let activation_stats = per_group_error(&xt, &xr, b)?;
    let weight_stats = per_group_error(&wt, &wr, b)?;
    let reference = matmul_f64(x, w);
    let approx = matmul_f64(&xr, &wr);
    let gemm = gemm_relative_error(&approx, &reference);
    let analyze_ms = t2.elapsed().as_secs_f64() * 1e3;

    Ok(PipelineReport {
        config: config.clone(),
        activation_stats,
        weight_stats,
        gemm_relative_error: gemm.value,
        gemm_error_is_absolute: gemm.is_absolute,
        rot_apply_count,
        perm_apply_count,
        timings: PhaseTimings {
            transform_ms,
            quantize_ms,
            analyze_ms,
        },
    })
}

/// Runs every pipeline in [`TransformKind::ALL`] with the shared
/// settings from `base` (its `transform` field is ignored).
pub fn compare_pipelines(x: &Tensor, w: &Tensor, base: &PipelineConfig) -> Result<Vec<PipelineReport>> {
    TransformKind::ALL
        .into_iter()
        .map(|transform| {
            run_pipeline(
                x,
                w,
                &PipelineConfig {
                    transform,
                    ..base.clone()
                },
            )
        })
        .collect()
}

/// Formats a float with nine significant digits in scientific notation,
/// the fixed width used by CSV summaries.
pub fn format_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Renders reports as a CSV summary, one row per report.
pub fn summary_csv(reports: &[PipelineReport]) -> String {
    let mut out = String::from(
        "pipeline,alpha,block_size,max_steps,seed,act_mean_err,act_max_err,\
         wt_mean_err,wt_max_err,gemm_rel_err,rot_apply_count\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.config.transform.name(),
            r.config.alpha,
            r.config.block_size,
            r.config.max_steps,
            r.config.seed,
            format_sig9(r.activation_stats.mean),
            format_sig9(r.activation_stats.max),
            format_sig9(r.weight_stats.mean),
            format_sig9(r.weight_stats.max),
            format_sig9(r.gemm_relative_error),
            r.rot_apply_count,
        ));
    }
    out
}
