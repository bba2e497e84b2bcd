//! Quantization-friendliness transforms: smooth scaling, block-diagonal
//! rotations, and zigzag channel permutation.
//!
//! All transforms preserve the activation-weight product in exact
//! arithmetic; they only reshape where the magnitude mass sits so that
//! block-scaled 4-bit quantization loses less. The single-rotation path
//! (smooth + one outlier-aware rotation) is the main pipeline; the
//! dual-rotation path (rotate, permute, rotate again) is the heavier
//! reference it is compared against.

mod permute;
mod rotation;
mod smooth;

pub use permute::{
    load_permutation, permute_columns, permute_rows, save_permutation, zigzag_permutation,
    Permutation,
};
pub use rotation::{
    apply_block_rotation, build_outlier_aware_rotation, build_outlier_aware_rotation_traced,
    fuse_into_weight, greedy_rotation_step, hadamard_rotation, load_rotation, save_rotation,
    select_reference_block, ApplySide, GreedyBuild, Rotation, RotationKind,
};
pub use smooth::{apply_smooth, compute_smooth_scale, CalibStats, SmoothScale};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::tensor::Tensor;

/// Output of [`dual_rotation_pipeline`]: the transformed pair plus every
/// transform artifact needed to reproduce or invert it.
#[derive(Debug, Clone)]
pub struct DualTransform {
    /// Transformed activations.
    pub x: Tensor,
    /// Transformed weights.
    pub w: Tensor,
    /// First rotation (built from the raw reference block).
    pub rotation1: Rotation,
    /// Zigzag permutation computed after the first rotation.
    pub permutation: Permutation,
    /// Second rotation (built from the permuted reference block).
    pub rotation2: Rotation,
}

/// Runs the dual-rotation reference pipeline on an (already smoothed)
/// activation/weight pair: rotate, zigzag-permute, rotate again.
///
/// The first rotation is built from the block holding the largest
/// activation magnitude; the permutation then deals channels so no block
/// hoards the remaining outliers; the second rotation cleans up the block
/// that is worst after permuting. Step seeds are derived from `seed` so
/// the two builds draw independent randomness.
pub fn dual_rotation_pipeline(
    x: &Tensor,
    w: &Tensor,
    block_size: usize,
    seed: u64,
    max_steps: usize,
) -> Result<DualTransform> {
    if x.cols() != w.rows() {
        return Err(Error::shape(format!(
            "activation columns ({}) must match weight rows ({})",
            x.cols(),
            w.rows()
        )));
    }
    if block_size == 0 || x.cols() % block_size != 0 {
        return Err(Error::shape(format!(
            "channel count {} is not a positive multiple of block size {block_size}",
            x.cols()
        )));
    }

    let ref1 = select_reference_block(x, block_size)?;
    let rotation1 = build_outlier_aware_rotation(
        &x.column_block(ref1, block_size)?,
        derive_seed(seed, 1),
        max_steps,
    )?;
    let x1 = apply_block_rotation(x, &rotation1, ApplySide::ActivationRight)?;
    let w1 = apply_block_rotation(w, &rotation1, ApplySide::WeightLeftTranspose)?;

    let permutation = zigzag_permutation(&x1.column_absmax(), block_size)?;
    let x2 = permute_columns(&x1, &permutation)?;
    let w2 = permute_rows(&w1, &permutation)?;

    let ref2 = select_reference_block(&x2, block_size)?;
    let rotation2 = build_outlier_aware_rotation(
        &x2.column_block(ref2, block_size)?,
        derive_seed(seed, 2),
        max_steps,
    )?;
    let x3 = apply_block_rotation(&x2, &rotation2, ApplySide::ActivationRight)?;
    let w3 = apply_block_rotation(&w2, &rotation2, ApplySide::WeightLeftTranspose)?;

    Ok(DualTransform {
        x: x3,
        w: w3,
        rotation1,
        permutation,
        rotation2,
    })
}
