//! Zigzag channel permutation: balances per-block outlier mass by dealing
//! channels into blocks in descending-magnitude boustrophedon order.
//!
//! Channels are sorted by calibration absmax (descending, stable). The
//! sorted list is then dealt across the `K` blocks round by round — left
//! to right on even rounds, right to left on odd rounds — so every block
//! receives one channel per magnitude tier and the largest channels never
//! pile into the same block.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A channel permutation aligned to quantization blocks.
///
/// `mapping[p]` is the original channel that moves to position `p`:
/// permuted activations take column `p` from original column
/// `mapping[p]`, and permuted weights take row `p` from original row
/// `mapping[p]`, so the product is unchanged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Permutation {
    /// Block width the zigzag dealing was aligned to.
    pub block_size: usize,
    /// Construction recipe (currently always `"zigzag"`).
    pub provenance: String,
    /// New position -> original channel.
    pub mapping: Vec<usize>,
}

impl Permutation {
    fn validate(&self) -> Result<()> {
        let n = self.mapping.len();
        if self.block_size == 0 || n == 0 || n % self.block_size != 0 {
            return Err(Error::format(format!(
                "permutation over {n} channels does not align to block size {}",
                self.block_size
            )));
        }
        let mut seen = vec![false; n];
        for &ch in &self.mapping {
            if ch >= n || seen[ch] {
                return Err(Error::format(format!(
                    "mapping is not a bijection over 0..{n}"
                )));
            }
            seen[ch] = true;
        }
        Ok(())
    }
}

/// Builds the zigzag permutation from per-channel absolute maxima.
///
/// The channel count must be a positive multiple of `block_size`. Ties in
/// magnitude keep the lower channel index first (the sort is stable).
pub fn zigzag_permutation(absmax: &[f32], block_size: usize) -> Result<Permutation> {
    let n = absmax.len();
    if block_size == 0 || n == 0 || n % block_size != 0 {
        return Err(Error::shape(format!(
            "channel count {n} is not a positive multiple of block size {block_size}"
        )));
    }
    if absmax.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("channel maxima must be finite"));
    }
    let blocks = n / block_size;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| absmax[b].partial_cmp(&absmax[a]).unwrap());

    let mut mapping = vec![0usize; n];
    for (i, &channel) in order.iter().enumerate() {
        let round = i / blocks;
        let lane = i % blocks;
        let block = if round % 2 == 0 {
            lane
        } else {
            blocks - 1 - lane
        };
        mapping[block * block_size + round] = channel;
    }
    Ok(Permutation {
        block_size,
        provenance: "zigzag".to_string(),
        mapping,
    })
}

/// Reorders activation columns: output column `p` is input column
/// `mapping[p]`.
pub fn permute_columns(t: &Tensor, perm: &Permutation) -> Result<Tensor> {
    if t.cols() != perm.mapping.len() {
        return Err(Error::shape(format!(
            "tensor has {} columns but permutation covers {}",
            t.cols(),
            perm.mapping.len()
        )));
    }
    let mut data = Vec::with_capacity(t.rows() * t.cols());
    for r in 0..t.rows() {
        let row = t.row(r);
        data.extend(perm.mapping.iter().map(|&src| row[src]));
    }
    Tensor::new(t.rows(), t.cols(), data)
}

/// Reorders weight rows: output row `p` is input row `mapping[p]`.
pub fn permute_rows(t: &Tensor, perm: &Permutation) -> Result<Tensor> {
    if t.rows() != perm.mapping.len() {
        return Err(Error::shape(format!(
            "tensor has {} rows but permutation covers {}",
            t.rows(),
            perm.mapping.len()
        )));
    }
    let mut data = Vec::with_capacity(t.rows() * t.cols());
    for &src in &perm.mapping {
        data.extend_from_slice(t.row(src));
    }
    Tensor::new(t.rows(), t.cols(), data)
}

/// Writes a permutation as pretty-printed JSON.
pub fn save_permutation(perm: &Permutation, path: impl AsRef<Path>) -> Result<()> {
    perm.validate()?;
    let json = serde_json::to_string_pretty(perm)
        .map_err(|e| Error::format(format!("failed to encode permutation: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Reads a permutation from JSON, validating that the mapping is a
/// block-aligned bijection.
pub fn load_permutation(path: impl AsRef<Path>) -> Result<Permutation> {
    let text = std::fs::read_to_string(path)?;
    let perm: Permutation = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("bad permutation file: {e}")))?;
    perm.validate()?;
    Ok(perm)
}
