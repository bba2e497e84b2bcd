//! Block-diagonal orthogonal rotations.
//!
//! All rotations here act on contiguous channel blocks of a fixed size
//! (matching the quantization group size), so a single `block_size x
//! block_size` orthogonal matrix describes the whole block-diagonal
//! transform. Three constructions are provided:
//!
//! * [`Rotation::identity`] — the do-nothing baseline.
//! * [`hadamard_rotation`] — a sign-randomized Walsh–Hadamard matrix, the
//!   standard incoherence-processing baseline.
//! * [`build_outlier_aware_rotation`] — a greedy product of elementary
//!   rotations, each of which spreads the currently worst channel of a
//!   calibration block uniformly across the block.
//!
//! Matrices are stored row-major in `f64`; a rotation is applied to
//! activations on the right (`X -> X R`) and to weights on the left with
//! the transpose (`W -> R^T W`), so products `X W` are preserved exactly
//! in infinite precision.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::tensor::Tensor;

/// How a rotation matrix was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationKind {
    /// No rotation (the identity matrix).
    Identity,
    /// Sign-randomized Walsh–Hadamard matrix.
    Hadamard,
    /// Greedy outlier-aware product of elementary rotations.
    OutlierAware,
}

impl RotationKind {
    /// Stable machine name (matches the serialized form).
    pub fn name(&self) -> &'static str {
        match self {
            RotationKind::Identity => "identity",
            RotationKind::Hadamard => "hadamard",
            RotationKind::OutlierAware => "outlier-aware",
        }
    }
}

/// A single `block_size x block_size` orthogonal matrix, applied
/// block-diagonally over channel blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rotation {
    /// Channel-block width the matrix applies to.
    pub block_size: usize,
    /// Construction recipe.
    pub provenance: RotationKind,
    /// Seed the construction drew randomness from.
    pub seed: u64,
    /// Number of greedy steps retained (zero for identity and Hadamard).
    pub steps_used: usize,
    /// Row-major `block_size x block_size` entries.
    pub matrix: Vec<f64>,
}

impl Rotation {
    /// The identity rotation for a given block size.
    pub fn identity(block_size: usize, seed: u64) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::domain("block size must be at least 1"));
        }
        let mut matrix = vec![0.0; block_size * block_size];
        for i in 0..block_size {
            matrix[i * block_size + i] = 1.0;
        }
        Ok(Rotation {
            block_size,
            provenance: RotationKind::Identity,
            seed,
            steps_used: 0,
            matrix,
        })
    }

    /// Entry at row `i`, column `j`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.block_size + j]
    }

    /// The transposed rotation (the exact inverse, since the matrix is
    /// orthogonal). Metadata is carried over unchanged.
    pub fn transposed(&self) -> Self {
        let b = self.block_size;
        let mut matrix = vec![0.0; b * b];
        for i in 0..b {
            for j in 0..b {
                matrix[j * b + i] = self.matrix[i * b + j];
            }
        }
        Rotation {
            matrix,
            ..self.clone()
        }
    }

    /// Largest absolute deviation of `R R^T` from the identity.
    pub fn orthogonality_error(&self) -> f64 {
        let b = self.block_size;
        let mut worst = 0.0f64;
        for i in 0..b {
            for j in 0..b {
                let mut dot = 0.0;
                for k in 0..b {
                    dot += self.matrix[i * b + k] * self.matrix[j * b + k];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::format("rotation block size must be at least 1"));
        }
        if self.matrix.len() != self.block_size * self.block_size {
            return Err(Error::format(format!(
                "rotation matrix has {} entries, expected {}",
                self.matrix.len(),
                self.block_size * self.block_size
            )));
        }
        if self.matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("rotation matrix contains non-finite entries"));
        }
        let err = self.orthogonality_error();
        if err > 1e-4 {
            return Err(Error::format(format!(
                "rotation matrix is not orthogonal (max |R R^T - I| = {err:.3e})"
            )));
        }
        Ok(())
    }
}

/// Builds a sign-randomized Walsh–Hadamard rotation.
///
/// `block_size` must be a power of two. With `randomize_signs` the input
/// channels are flipped by a seeded ±1 diagonal before mixing; without it
/// the matrix is the plain normalized Hadamard matrix (still orthogonal,
/// useful for frozen-value tests).
pub fn hadamard_rotation(block_size: usize, seed: u64, randomize_signs: bool) -> Result<Rotation> {
    if block_size == 0 || !block_size.is_power_of_two() {
        return Err(Error::domain(format!(
            "Hadamard rotation needs a power-of-two block size, got {block_size}"
        )));
    }
    let b = block_size;
    // Sylvester construction: H_{2n} = [[H_n, H_n], [H_n, -H_n]].
    let mut h = vec![0.0f64; b * b];
    h[0] = 1.0;
    let mut n = 1;
    while n < b {
        for i in 0..n {
            for j in 0..n {
                let v = h[i * b + j];
                h[i * b + (j + n)] = v;
                h[(i + n) * b + j] = v;
                h[(i + n) * b + (j + n)] = -v;
            }
        }
        n *= 2;
    }
    let inv_sqrt = 1.0 / (b as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..b {
        let sign = if randomize_signs && rng.sample::<f64, _>(StandardNormal) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for j in 0..b {
            h[i * b + j] *= sign * inv_sqrt;
        }
    }
    Ok(Rotation {
        block_size: b,
        provenance: RotationKind::Hadamard,
        seed,
        steps_used: 0,
        matrix: h,
    })
}

/// One greedy elementary rotation: an orthogonal matrix whose `peak_dim`
/// row is the uniform direction `1/sqrt(B) * (1, ..., 1)`.
///
/// Applied on the right, it spreads whatever sits in channel `peak_dim`
/// evenly across the whole block. The remaining rows are a seeded random
/// completion to an orthonormal basis, so repeated steps keep mixing the
/// block rather than reusing one fixed pattern.
pub fn greedy_rotation_step(block_size: usize, peak_dim: usize, step_seed: u64) -> Result<Vec<f64>> {
    if block_size == 0 {
        return Err(Error::domain("block size must be at least 1"));
    }
    if peak_dim >= block_size {
        return Err(Error::shape(format!(
            "peak dimension {peak_dim} out of range for block size {block_size}"
        )));
    }
    let b = block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
    let mut q = vec![0.0f64; b * b];
    let inv_sqrt = 1.0 / (b as f64).sqrt();
    for v in q[..b].iter_mut() {
        *v = inv_sqrt;
    }
    for i in 1..b {
        // Draw a Gaussian vector and orthogonalize it against the rows
        // built so far (two modified Gram-Schmidt passes keep the basis
        // orthonormal to near machine precision). Degenerate draws are
        // redrawn.
        loop {
            let mut v: Vec<f64> = (0..b).map(|_| rng.sample(StandardNormal)).collect();
            for _ in 0..2 {
                for p in 0..i {
                    let row = &q[p * b..(p + 1) * b];
                    let dot: f64 = v.iter().zip(row).map(|(a, r)| a * r).sum();
                    for (vj, rj) in v.iter_mut().zip(row) {
                        *vj -= dot * rj;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm >= 1e-6 {
                for (dst, src) in q[i * b..(i + 1) * b].iter_mut().zip(&v) {
                    *dst = src / norm;
                }
                break;
            }
        }
    }
    // Swap rows 0 and peak_dim so the uniform row lands on the peak
    // channel; a row permutation of an orthogonal matrix stays orthogonal.
    if peak_dim != 0 {
        for j in 0..b {
            q.swap(j, peak_dim * b + j);
        }
    }
    Ok(q)
}

/// Result of a traced greedy build: the chosen rotation plus the peak
/// channel magnitude after every candidate prefix (index 0 is the
/// unrotated calibration block).
#[derive(Debug, Clone)]
pub struct GreedyBuild {
    /// The best prefix found.
    pub rotation: Rotation,
    /// `peaks[k]` = largest column absmax after applying the first `k`
    /// greedy steps to the calibration block.
    pub peaks: Vec<f64>,
}

/// Builds an outlier-aware rotation from one calibration block and
/// reports the per-prefix peak trace. See
/// [`build_outlier_aware_rotation`] for the selection rule.
pub fn build_outlier_aware_rotation_traced(
    calib_block: &Tensor,
    seed: u64,
    max_steps: usize,
) -> Result<GreedyBuild> {
    let b = calib_block.cols();
    if b == 0 {
        return Err(Error::shape("calibration block has no columns"));
    }
    let mut y: Vec<f64> = calib_block.data().iter().map(|&v| v as f64).collect();
    let rows = calib_block.rows();

    let col_peak = |y: &[f64]| -> (usize, f64) {
        let mut best_dim = 0;
        let mut best = -1.0f64;
        for j in 0..b {
            let mut m = 0.0f64;
            for i in 0..rows {
                m = m.max(y[i * b + j].abs());
            }
            if m > best {
                best = m;
                best_dim = j;
            }
        }
        (best_dim, best)
    };

    let (_, peak0) = col_peak(&y);
    if peak0 == 0.0 {
        // Nothing to mitigate; report the identity without burning steps.
        return Ok(GreedyBuild {
            rotation: Rotation::identity(b, seed)?,
            peaks: vec![0.0],
        });
    }

    let mut peaks = Vec::with_capacity(max_steps + 1);
    peaks.push(peak0);
    let mut r_acc = Rotation::identity(b, seed)?.matrix;
    let mut best_matrix = r_acc.clone();
    let mut best_k = 0usize;
    let mut best_peak = peak0;

    for k in 1..=max_steps {
        let (peak_dim, _) = col_peak(&y);
        let step = greedy_rotation_step(b, peak_dim, derive_seed(seed, k as u64))?;
        // y <- y * step, r_acc <- r_acc * step.
        let mut y_next = vec![0.0f64; rows * b];
        for i in 0..rows {
            for l in 0..b {
                let v = y[i * b + l];
                if v == 0.0 {
                    continue;
                }
                for j in 0..b {
                    y_next[i * b + j] += v * step[l * b + j];
                }
            }
        }
        y = y_next;
        let mut r_next = vec![0.0f64; b * b];
        for i in 0..b {
            for l in 0..b {
                let v = r_acc[i * b + l];
                for j in 0..b {
                    r_next[i * b + j] += v * step[l * b + j];
                }
            }
        }
        r_acc = r_next;

        let (_, peak) = col_peak(&y);
        peaks.push(peak);
        if peak < best_peak {
            best_peak = peak;
            best_k = k;
            best_matrix = r_acc.clone();
        }
    }

    let provenance = if best_k == 0 {
        RotationKind::Identity
    } else {
        RotationKind::OutlierAware
    };
    Ok(GreedyBuild {
        rotation: Rotation {
            block_size: b,
            provenance,
            seed,
            steps_used: best_k,
            matrix: best_matrix,
        },
        peaks,
    })
}

/// Builds an outlier-aware rotation from one calibration block.
///
/// Greedy construction: at each step the channel with the largest
/// absolute value in the (rotated-so-far) calibration block is spread
/// uniformly across the block by [`greedy_rotation_step`]. After
/// `max_steps` steps the prefix whose peak magnitude was smallest is
/// kept — including the empty prefix, in which case the result is the
/// identity with `steps_used = 0`. Ties go to the shorter prefix.
pub fn build_outlier_aware_rotation(
    calib_block: &Tensor,
    seed: u64,
    max_steps: usize,
) -> Result<Rotation> {
    Ok(build_outlier_aware_rotation_traced(calib_block, seed, max_steps)?.rotation)
}

/// Picks the calibration block that contains the globally largest
/// absolute value (ties resolved toward the lowest block index; an
/// all-zero calibration picks block 0).
pub fn select_reference_block(calib: &Tensor, block_size: usize) -> Result<usize> {
    if block_size == 0 || calib.cols() % block_size != 0 {
        return Err(Error::shape(format!(
            "column count {} is not divisible by block size {block_size}",
            calib.cols()
        )));
    }
    let absmax = calib.column_absmax();
    let mut best_block = 0usize;
    let mut best = -1.0f32;
    for (j, &m) in absmax.iter().enumerate() {
        if m > best {
            best = m;
            best_block = j / block_size;
        }
    }
    Ok(best_block)
}

/// Which side of the product a block rotation is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplySide {
    /// Activations: each row segment is multiplied by `R` on the right.
    ActivationRight,
    /// Weights: each row block is multiplied by `R^T` on the left, so the
    /// product with right-rotated activations is unchanged.
    WeightLeftTranspose,
}

/// Applies a rotation block-diagonally to a tensor.
///
/// For [`ApplySide::ActivationRight`] the tensor's column count must be a
/// multiple of the rotation's block size; for
/// [`ApplySide::WeightLeftTranspose`] the row count must be. Arithmetic
/// accumulates in f64 and rounds once to f32 at the end.
pub fn apply_block_rotation(t: &Tensor, rot: &Rotation, side: ApplySide) -> Result<Tensor> {
    let b = rot.block_size;
    if b == 0 || rot.matrix.len() != b * b {
        return Err(Error::shape("rotation matrix shape is inconsistent"));
    }
    match side {
        ApplySide::ActivationRight => {
            if t.cols() % b != 0 {
                return Err(Error::shape(format!(
                    "activation columns ({}) not divisible by block size {b}",
                    t.cols()
                )));
            }
            let blocks = t.cols() / b;
            let mut out = vec![0.0f32; t.rows() * t.cols()];
            for i in 0..t.rows() {
                let row = t.row(i);
                let orow = &mut out[i * t.cols()..(i + 1) * t.cols()];
                for blk in 0..blocks {
                    let seg = &row[blk * b..(blk + 1) * b];
                    let oseg = &mut orow[blk * b..(blk + 1) * b];
                    for j in 0..b {
                        let mut acc = 0.0f64;
                        for (k, &v) in seg.iter().enumerate() {
                            acc += v as f64 * rot.matrix[k * b + j];
                        }
                        oseg[j] = acc as f32;
                    }
                }
            }
            Tensor::new(t.rows(), t.cols(), out)
        }
        ApplySide::WeightLeftTranspose => {
            if t.rows() % b != 0 {
                return Err(Error::shape(format!(
                    "weight rows ({}) not divisible by block size {b}",
                    t.rows()
                )));
            }
            let blocks = t.rows() / b;
            let cols = t.cols();
            let mut out = vec![0.0f64; t.rows() * cols];
            for blk in 0..blocks {
                for k in 0..b {
                    let src = t.row(blk * b + k);
                    for i in 0..b {
                        let coeff = rot.matrix[k * b + i];
                        if coeff == 0.0 {
                            continue;
                        }
                        let dst = &mut out[(blk * b + i) * cols..(blk * b + i + 1) * cols];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += coeff * s as f64;
                        }
                    }
                }
            }
            Tensor::new(t.rows(), cols, out.into_iter().map(|v| v as f32).collect())
        }
    }
}

/// Fuses smoothing and rotation into the weights in one f64 pass:
/// returns `BlockDiag(R^T) * diag(lambda) * W`.
///
/// Equivalent to scaling weight rows by `lambda` and then applying
/// [`ApplySide::WeightLeftTranspose`], but without an intermediate f32
/// rounding between the two stages.
pub fn fuse_into_weight(weights: &Tensor, lambda: &[f32], rot: &Rotation) -> Result<Tensor> {
    if weights.rows() != lambda.len() {
        return Err(Error::shape(format!(
            "weights have {} rows but {} smoothing factors were given",
            weights.rows(),
            lambda.len()
        )));
    }
    let b = rot.block_size;
    if b == 0 || weights.rows() % b != 0 {
        return Err(Error::shape(format!(
            "weight rows ({}) not divisible by block size {b}",
            weights.rows()
        )));
    }
    let blocks = weights.rows() / b;
    let cols = weights.cols();
    let mut out = vec![0.0f64; weights.rows() * cols];
    for blk in 0..blocks {
        for k in 0..b {
            let src = weights.row(blk * b + k);
            let l = lambda[blk * b + k] as f64;
            for i in 0..b {
                let coeff = rot.matrix[k * b + i] * l;
                if coeff == 0.0 {
                    continue;
                }
                let dst = &mut out[(blk * b + i) * cols..(blk * b + i + 1) * cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += coeff * s as f64;
                }
            }
        }
    }
    Tensor::new(
        weights.rows(),
        cols,
        out.into_iter().map(|v| v as f32).collect(),
    )
}

/// Writes a rotation as pretty-printed JSON.
pub fn save_rotation(rot: &Rotation, path: impl AsRef<Path>) -> Result<()> {
    rot.validate()?;
    let json = serde_json::to_string_pretty(rot)
        .map_err(|e| Error::format(format!("failed to encode rotation: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Reads a rotation from JSON, validating shape and orthogonality.
pub fn load_rotation(path: impl AsRef<Path>) -> Result<Rotation> {
    let text = std::fs::read_to_string(path)?;
    let rot: Rotation =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("bad rotation file: {e}")))?;
    rot.validate()?;
    Ok(rot)
}
