//! Dense row-major f32 tensors, binary/CSV loading, and the synthetic
//! activation generator used by the error-analysis harness.
//!
//! The on-disk binary format (`MXTEN1`) is:
//!
//! ```text
//! magic "MXTEN1" (6 bytes) | rows: u32 LE | cols: u32 LE | payload: rows*cols f32 LE, row-major
//! ```
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! `seed_from_u64`. The generator uses ChaCha's independent streams so that
//! outlier injection never perturbs the base draws: stream 0 produces the base
//! matrix, stream 1 picks outlier columns, stream 2 picks massive cells.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const MXTEN_MAGIC: &[u8; 6] = b"MXTEN1";

/// Dense row-major matrix of finite f32 values. `rows` and `cols` are both
/// at least 1 and `data.len() == rows * cols`; constructors enforce this.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, rejecting empty shapes, length mismatches and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("tensor dimensions must be >= 1, got {rows}x{cols}")));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::shape(format!("tensor shape {rows}x{cols} overflows")))?;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite value {} at flat index {idx}",
                data[idx]
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Internal constructor for values already known to be finite
    /// (e.g. exact products of representable dyadics).
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Tensor::new(rows, cols, vec![0.0; rows.saturating_mul(cols)])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        self.data[r * self.cols + c]
    }

    /// One row as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies a contiguous column block `[block_idx*block_size, ..)` into a
    /// new `rows x block_size` tensor. Used to cut calibration slices.
    pub fn column_block(&self, block_idx: usize, block_size: usize) -> Result<Tensor> {
        if block_size == 0 || self.cols % block_size != 0 {
            return Err(Error::shape(format!(
                "block size {block_size} does not divide {} columns",
                self.cols
            )));
        }
        let nblocks = self.cols / block_size;
        if block_idx >= nblocks {
            return Err(Error::shape(format!(
                "block index {block_idx} out of range (have {nblocks} blocks)"
            )));
        }
        let start = block_idx * block_size;
        let mut data = Vec::with_capacity(self.rows * block_size);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + block_size]);
        }
        Ok(Tensor::from_raw(self.rows, block_size, data))
    }

    /// Largest |value| per column.
    pub fn column_absmax(&self) -> Vec<f32> {
        let mut out = vec![0.0f32; self.cols];
        for r in 0..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                let a = v.abs();
                if a > out[c] {
                    out[c] = a;
                }
            }
        }
        out
    }

    /// Largest |value| per row.
    pub fn row_absmax(&self) -> Vec<f32> {
        (0..self.rows)
            .map(|r| self.row(r).iter().fold(0.0f32, |m, &v| m.max(v.abs())))
            .collect()
    }
}

#[cfg(test)]
impl Tensor {
    /// Small deterministic Gaussian tensor for unit tests.
    pub(crate) fn generated_for_tests(rows: usize, cols: usize, seed: u64) -> Tensor {
        generate_tensor(rows, cols, seed, &OutlierSpec::default()).unwrap()
    }
}

/// Base distribution for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseDistribution {
    /// N(0, 1) draws.
    StandardNormal,
    /// Uniform draws on [-1, 1].
    UniformSymmetric,
}

/// Controls outlier injection in [`generate_tensor`].
///
/// "Normal" outliers scale whole columns (persistent channel outliers);
/// "massive" outliers scale individual cells. Scaling multiplies the base
/// draw, so a cell can carry both multipliers if it lands in both sets.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierSpec {
    /// Fraction of columns to scale; the count is `floor(fraction * cols)`.
    pub normal_fraction: f32,
    pub normal_magnitude: f32,
    /// Number of individual cells to scale.
    pub massive_count: usize,
    pub massive_magnitude: f32,
    pub base: BaseDistribution,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        OutlierSpec {
            normal_fraction: 0.0,
            normal_magnitude: 1.0,
            massive_count: 0,
            massive_magnitude: 1.0,
            base: BaseDistribution::StandardNormal,
        }
    }
}

/// Draws a `rows x cols` tensor from the base distribution and injects
/// outliers per `spec`. Deterministic for a given `(rows, cols, seed, spec)`;
/// cells not selected for injection are bitwise equal to the base draw.
pub fn generate_tensor(rows: usize, cols: usize, seed: u64, spec: &OutlierSpec) -> Result<Tensor> {
    if rows == 0 || cols == 0 {
        return Err(Error::shape(format!("tensor dimensions must be >= 1, got {rows}x{cols}")));
    }
    if !(0.0..=1.0).contains(&spec.normal_fraction) {
        return Err(Error::domain(format!(
            "normal_fraction must lie in [0, 1], got {}",
            spec.normal_fraction
        )));
    }
    if !spec.normal_magnitude.is_finite() || !spec.massive_magnitude.is_finite() {
        return Err(Error::domain("outlier magnitudes must be finite".to_string()));
    }
    let cells = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::shape(format!("tensor shape {rows}x{cols} overflows")))?;
    if spec.massive_count > cells {
        return Err(Error::domain(format!(
            "massive_count {} exceeds cell count {cells}",
            spec.massive_count
        )));
    }

    let mut base_rng = ChaCha8Rng::seed_from_u64(seed);
    base_rng.set_stream(0);
    let mut data: Vec<f32> = Vec::with_capacity(cells);
    match spec.base {
        BaseDistribution::StandardNormal => {
            for _ in 0..cells {
                data.push(base_rng.sample::<f32, _>(StandardNormal));
            }
        }
        BaseDistribution::UniformSymmetric => {
            for _ in 0..cells {
                data.push(base_rng.gen_range(-1.0f32..=1.0f32));
            }
        }
    }

    let n_outlier_cols = (spec.normal_fraction as f64 * cols as f64).floor() as usize;
    if n_outlier_cols > 0 {
        let mut col_rng = ChaCha8Rng::seed_from_u64(seed);
        col_rng.set_stream(1);
        for col in sample(&mut col_rng, cols, n_outlier_cols) {
            for r in 0..rows {
                data[r * cols + col] *= spec.normal_magnitude;
            }
        }
    }

    if spec.massive_count > 0 {
        let mut cell_rng = ChaCha8Rng::seed_from_u64(seed);
        cell_rng.set_stream(2);
        for cell in sample(&mut cell_rng, cells, spec.massive_count) {
            data[cell] *= spec.massive_magnitude;
        }
    }

    Tensor::new(rows, cols, data)
}

/// Writes `MXTEN1` bytes.
pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(14 + t.data.len() * 4);
    bytes.extend_from_slice(MXTEN_MAGIC);
    bytes.extend_from_slice(&u32::try_from(t.rows).map_err(|_| Error::shape("rows exceed u32".to_string()))?.to_le_bytes());
    bytes.extend_from_slice(&u32::try_from(t.cols).map_err(|_| Error::shape("cols exceed u32".to_string()))?.to_le_bytes());
    for v in &t.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads `MXTEN1` bytes back. Rejects bad magic and size mismatches as
/// format errors and non-finite payload values as domain errors.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = fs::read(&path)?;
    if bytes.len() < 14 || &bytes[0..6] != MXTEN_MAGIC {
        return Err(Error::format("missing MXTEN1 magic".to_string()));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(format!("header declares empty shape {rows}x{cols}")));
    }
    let expected = 14 + (rows as u64) * (cols as u64) * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::format(format!(
            "payload size mismatch: header {rows}x{cols} wants {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes[14..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(rows, cols, data)
}

/// Reads a comma-separated text matrix: one row per line, decimal floats.
/// Every row must have the same number of fields.
pub fn load_tensor_csv(path: impl AsRef<Path>) -> Result<Tensor> {
    let text = fs::read_to_string(&path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut n = 0usize;
        for field in line.split(',') {
            let v: f32 = field.trim().parse().map_err(|_| {
                Error::format(format!("line {}: cannot parse {:?} as a float", lineno + 1, field.trim()))
            })?;
            data.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::format(format!(
                    "line {}: expected {c} fields, found {n}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::format("CSV file contains no rows".to_string()))?;
    Tensor::new(rows, cols, data)
}
