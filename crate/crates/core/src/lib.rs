//! Microscaling 4-bit (MXFP4) quantization with outlier-taming
//! transforms, plus the error-analysis harness that compares them.
//!
//! The crate is organized around a simple story:
//!
//! * [`tensor`] — dense f32 matrices, file formats, and a seeded
//!   synthetic generator with controllable channel/cell outliers.
//! * [`codec`] — the MXFP4 format itself (FP4 E2M1 elements sharing one
//!   power-of-two E8M0 scale per 32-element group) and a uniform integer
//!   affine quantizer used as a reference point.
//! * [`transforms`] — product-preserving reshaping applied before
//!   quantization: smooth scaling, block-diagonal rotations (randomized
//!   Hadamard or greedy outlier-aware), and zigzag channel permutation.
//! * [`analysis`] — pipelines that combine the above, quantize, and
//!   measure per-group and end-to-end error against the full-precision
//!   product.
//!
//! Everything randomized is seeded ChaCha8, and every artifact
//! (tensors, quantized tensors, rotations, permutations, reports) is
//! bitwise deterministic for a given configuration.

pub mod analysis;
pub mod codec;
pub mod error;
mod linalg;
mod seeds;
pub mod tensor;
pub mod transforms;

pub use analysis::{
    compare_pipelines, format_sig9, gemm_relative_error, per_group_error, run_pipeline,
    summary_csv, GemmError, GroupErrorStats, PhaseTimings, PipelineConfig, PipelineReport,
    TransformKind,
};
pub use codec::{
    block_scale, dequantize_block, dequantize_tensor_mx, fp4_nearest, int_uniform_dequantize,
    int_uniform_quantize, load_quantized, quantize_block, quantize_tensor_mx, save_quantized,
    E8m0Scale, Fp4Code, IntQuantParams, IntQuantizedTensor, MxQuantizedTensor, FP4_MAGNITUDES,
};
pub use error::{Error, Result};
pub use tensor::{
    generate_tensor, load_tensor, load_tensor_csv, save_tensor, BaseDistribution, OutlierSpec,
    Tensor,
};
pub use transforms::{
    apply_block_rotation, apply_smooth, build_outlier_aware_rotation,
    build_outlier_aware_rotation_traced, compute_smooth_scale, dual_rotation_pipeline,
    fuse_into_weight, greedy_rotation_step, hadamard_rotation, load_permutation, load_rotation,
    permute_columns, permute_rows, save_permutation, save_rotation, select_reference_block,
    zigzag_permutation, ApplySide, CalibStats, DualTransform, GreedyBuild, Permutation, Rotation,
    RotationKind, SmoothScale,
};
