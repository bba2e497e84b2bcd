//! Smooth scaling: migrate quantization difficulty from activations into
//! weights with a per-channel diagonal rescale.
//!
//! For channel `j` with calibration activation absmax `a_j` and weight-row
//! absmax `w_j`, the scale is `lambda_j = a_j^alpha / w_j^(1-alpha)`.
//! Activations are divided by `lambda_j`, weight row `j` is multiplied by
//! it, so the product `X W` is unchanged in exact arithmetic.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel absolute maxima collected from a calibration activation
/// matrix and the weight matrix it feeds.
#[derive(Debug, Clone)]
pub struct CalibStats {
    /// `max_i |X[i, j]|` per activation column `j`.
    pub act_absmax: Vec<f32>,
    /// `max_k |W[j, k]|` per weight row `j`.
    pub weight_absmax: Vec<f32>,
}

impl CalibStats {
    /// Collects column/row maxima from a calibration pair. The activation
    /// column count must match the weight row count.
    pub fn collect(activations: &Tensor, weights: &Tensor) -> Result<Self> {
        if activations.cols() != weights.rows() {
            return Err(Error::shape(format!(
                "activation columns ({}) must match weight rows ({})",
                activations.cols(),
                weights.rows()
            )));
        }
        Ok(CalibStats {
            act_absmax: activations.column_absmax(),
            weight_absmax: weights.row_absmax(),
        })
    }
}

/// Per-channel smoothing factors, always strictly positive and finite.
#[derive(Debug, Clone)]
pub struct SmoothScale {
    /// Migration strength used to produce the factors.
    pub alpha: f32,
    /// `lambda_j` per channel.
    pub lambda: Vec<f32>,
}

/// Computes smoothing factors from calibration statistics.
///
/// `alpha` must lie in `[0, 1]`. A channel whose activation or weight
/// absmax is zero keeps `lambda = 1` so dead channels are left untouched.
pub fn compute_smooth_scale(stats: &CalibStats, alpha: f32) -> Result<SmoothScale> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!(
            "alpha must be in [0, 1], got {alpha}"
        )));
    }
    if stats.act_absmax.len() != stats.weight_absmax.len() {
        return Err(Error::shape(format!(
            "calibration stats disagree on channel count: {} vs {}",
            stats.act_absmax.len(),
            stats.weight_absmax.len()
        )));
    }
    let lambda = stats
        .act_absmax
        .iter()
        .zip(&stats.weight_absmax)
        .map(|(&a, &w)| {
            // powf(0.0) == 1.0, so alpha = 0 or 1 degrades gracefully.
            let num = a.powf(alpha);
            let den = w.powf(1.0 - alpha);
            if num == 0.0 || den == 0.0 {
                1.0
            } else {
                num / den
            }
        })
        .collect();
    Ok(SmoothScale { alpha, lambda })
}

/// Applies smoothing: returns `(X diag(1/lambda), diag(lambda) W)`.
pub fn apply_smooth(
    activations: &Tensor,
    weights: &Tensor,
    scale: &SmoothScale,
) -> Result<(Tensor, Tensor)> {
    let channels = scale.lambda.len();
    if activations.cols() != channels || weights.rows() != channels {
        return Err(Error::shape(format!(
            "smooth scale has {} channels but activations have {} columns and weights {} rows",
            channels,
            activations.cols(),
            weights.rows()
        )));
    }
    let mut x = activations.data().to_vec();
    for row in x.chunks_mut(channels) {
        for (v, &l) in row.iter_mut().zip(&scale.lambda) {
            *v /= l;
        }
    }
    let mut w = weights.data().to_vec();
    let wcols = weights.cols();
    for (j, row) in w.chunks_mut(wcols).enumerate() {
        let l = scale.lambda[j];
        for v in row.iter_mut() {
            *v *= l;
        }
    }
    Ok((
        Tensor::new(activations.rows(), channels, x)?,
        Tensor::new(channels, wcols, w)?,
    ))
}
