//! 4-bit microscaling codec: groups of elements share one power-of-two scale
//! (E8M0, stored as an i8 exponent) and each element is a 4-bit E2M1 float.
//!
//! The element grid is `sign x {0, 0.5, 1, 1.5, 2, 3, 4, 6}`. The group scale
//! is `2^(floor(log2(max |x|)) - 2)`, which places the largest element of a
//! non-zero group at 4..8 grid units — inside the top octave of the grid, at
//! most mildly clipped. All-zero groups take exponent 0.
//!
//! The on-disk format (`MXQ4`) is:
//!
//! ```text
//! magic "MXQ4" | rows: u32 LE | cols: u32 LE | group_size: u32 LE
//!   | one i8 scale exponent per group, row-major group order
//!   | packed code nibbles, two per byte, low nibble first, row-major
//!   | (trailing pad nibble 0 if rows*cols is odd)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decoded magnitudes of the eight non-negative element codes, indexed by the
/// low three bits (exponent and mantissa) of a code.
pub const FP4_MAGNITUDES: [f32; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];

/// Midpoints between adjacent grid magnitudes...
const HALFWAY: [f32; 7] = [0.25, 0.75, 1.25, 1.75, 2.5, 3.5, 5.0];
/// ...and the magnitude index chosen when a value lands exactly on one:
/// always the neighbour whose mantissa bit is 0 (round-half-to-even on the
/// 4-bit grid), so 2.5 -> 2.0 but 3.5 -> 4.0.
const HALFWAY_PICK: [u8; 7] = [0, 2, 2, 4, 4, 6, 6];

/// One 4-bit element code: sign bit in bit 3, magnitude index in bits 0..2.
/// Both zero codes (`0b0000`, `0b1000`) decode to 0.0; the encoder only ever
/// emits the positive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fp4Code(u8);

impl Fp4Code {
    /// Masks `bits` to the low nibble.
    pub fn from_bits(bits: u8) -> Self {
        Fp4Code(bits & 0x0f)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn decode(self) -> f32 {
        let mag = FP4_MAGNITUDES[(self.0 & 0b0111) as usize];
        if self.0 & 0b1000 != 0 && mag != 0.0 {
            -mag
        } else {
            mag
        }
    }
}

/// Power-of-two group scale with exponent in [-127, 127]. The i8 value -128
/// (the NaN pattern of the E8M0 format) is rejected everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct E8m0Scale {
    exponent: i8,
}

impl E8m0Scale {
    pub fn new(exponent: i8) -> Result<Self> {
        if exponent == i8::MIN {
            return Err(Error::domain("E8M0 exponent -128 is the NaN pattern".to_string()));
        }
        Ok(E8m0Scale { exponent })
    }

    pub fn exponent(self) -> i8 {
        self.exponent
    }

    /// The scale value 2^exponent, built exactly from bits (2^-127 is a
    /// subnormal f32 and still exact).
    pub fn value(self) -> f32 {
        let e = self.exponent as i32;
        if e >= -126 {
            f32::from_bits(((e + 127) as u32) << 23)
        } else {
            f32::from_bits(0x0040_0000)
        }
    }
}

/// floor(log2(x)) for positive finite x, exact, straight from the IEEE bits.
fn floor_log2(x: f32) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let exp = ((bits >> 23) & 0xff) as i32;
    if exp != 0 {
        exp - 127
    } else {
        // subnormal: value is mantissa * 2^-149
        let mant = bits & 0x007f_ffff;
        (31 - mant.leading_zeros() as i32) - 149
    }
}

/// Nearest grid code for a finite value. Exact midpoints round to the
/// neighbour with mantissa bit 0; |v| beyond 6 clamps to the +/-6 code.
/// Monotone non-decreasing in `v`; never returns the negative-zero code.
pub fn fp4_nearest(v: f32) -> Result<Fp4Code> {
    if !v.is_finite() {
        return Err(Error::domain(format!("cannot encode non-finite value {v}")));
    }
    let a = v.abs();
    let mut idx = 7u8;
    for (i, &h) in HALFWAY.iter().enumerate() {
        if a < h {
            idx = i as u8;
            break;
        }
        if a == h {
            idx = HALFWAY_PICK[i];
            break;
        }
    }
    let bits = if v < 0.0 && idx != 0 { 0b1000 | idx } else { idx };
    Ok(Fp4Code(bits))
}

/// Shared scale for one group: exponent floor(log2(max |x|)) - 2, clamped to
/// the representable window; all-zero groups take exponent 0.
pub fn block_scale(block: &[f32]) -> Result<E8m0Scale> {
    if block.is_empty() {
        return Err(Error::shape("cannot scale an empty block".to_string()));
    }
    let mut amax = 0.0f32;
    for &x in block {
        if !x.is_finite() {
            return Err(Error::domain(format!("non-finite value {x} in block")));
        }
        amax = amax.max(x.abs());
    }
    if amax == 0.0 {
        return E8m0Scale::new(0);
    }
    let e = (floor_log2(amax) - 2).clamp(-127, 127);
    E8m0Scale::new(e as i8)
}

/// Quantizes one group: divides by the shared scale (exact: the scale is a
/// power of two) and rounds each quotient to the nearest grid code.
pub fn quantize_block(block: &[f32]) -> Result<(E8m0Scale, Vec<Fp4Code>)> {
    let scale = block_scale(block)?;
    let s = scale.value();
    let codes = block.iter().map(|&x| fp4_nearest(x / s)).collect::<Result<Vec<_>>>()?;
    Ok((scale, codes))
}

/// Reconstructs a group: decode(code) * scale, exact in f32 for every scale
/// the quantizer produces.
pub fn dequantize_block(scale: E8m0Scale, codes: &[Fp4Code]) -> Vec<f32> {
    let s = scale.value();
    codes.iter().map(|c| c.decode() * s).collect()
}

/// A quantized tensor: one scale per group plus packed element codes.
/// Groups run along each row (`group_size` consecutive columns) and never
/// straddle rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MxQuantizedTensor {
    rows: usize,
    cols: usize,
    group_size: usize,
    /// Row-major group order: all groups of row 0, then row 1, ...
    scales: Vec<E8m0Scale>,
    /// Two code nibbles per byte, low nibble first, row-major element order.
    packed: Vec<u8>,
}

impl MxQuantizedTensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn groups_per_row(&self) -> usize {
        self.cols / self.group_size
    }

    pub fn num_groups(&self) -> usize {
        self.scales.len()
    }

    pub fn scale(&self, row: usize, group: usize) -> E8m0Scale {
        assert!(row < self.rows && group < self.groups_per_row());
        self.scales[row * self.groups_per_row() + group]
    }

    pub fn scales(&self) -> &[E8m0Scale] {
        &self.scales
    }

    pub fn code(&self, row: usize, col: usize) -> Fp4Code {
        assert!(row < self.rows && col < self.cols, "index ({row},{col}) out of bounds");
        let k = row * self.cols + col;
        let byte = self.packed[k / 2];
        Fp4Code::from_bits(if k % 2 == 0 { byte } else { byte >> 4 })
    }
}

/// Quantizes a tensor group by group. `group_size` must divide the column
/// count so that groups align with rows.
pub fn quantize_tensor_mx(t: &Tensor, group_size: usize) -> Result<MxQuantizedTensor> {
    if group_size == 0 || t.cols() % group_size != 0 {
        return Err(Error::shape(format!(
            "group size {group_size} does not divide {} columns",
            t.cols()
        )));
    }
    let mut scales = Vec::with_capacity(t.rows() * t.cols() / group_size);
    let mut packed = vec![0u8; (t.rows() * t.cols() + 1) / 2];
    let mut k = 0usize;
    for r in 0..t.rows() {
        for group in t.row(r).chunks_exact(group_size) {
            let (scale, codes) = quantize_block(group)?;
            scales.push(scale);
            for code in codes {
                if k % 2 == 0 {
                    packed[k / 2] = code.bits();
                } else {
                    packed[k / 2] |= code.bits() << 4;
                }
                k += 1;
            }
        }
    }
    Ok(MxQuantizedTensor { rows: t.rows(), cols: t.cols(), group_size, scales, packed })
}

/// Reconstructs the full tensor. Every product decode(code) * 2^e is an
/// exactly representable f32 for quantizer-produced exponents.
pub fn dequantize_tensor_mx(q: &MxQuantizedTensor) -> Tensor {
    let gpr = q.groups_per_row();
    let mut data = Vec::with_capacity(q.rows * q.cols);
    for r in 0..q.rows {
        for g in 0..gpr {
            let s = q.scales[r * gpr + g].value();
            for c in 0..q.group_size {
                data.push(q.code(r, g * q.group_size + c).decode() * s);
            }
        }
    }
    Tensor::from_raw(q.rows, q.cols, data)
}

pub const MXQ_MAGIC: &[u8; 4] = b"MXQ4";

/// Writes `MXQ4` bytes.
pub fn save_quantized(q: &MxQuantizedTensor, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + q.scales.len() + q.packed.len());
    bytes.extend_from_slice(MXQ_MAGIC);
    bytes.extend_from_slice(&u32::try_from(q.rows).map_err(|_| Error::shape("rows exceed u32".to_string()))?.to_le_bytes());
    bytes.extend_from_slice(&u32::try_from(q.cols).map_err(|_| Error::shape("cols exceed u32".to_string()))?.to_le_bytes());
    bytes.extend_from_slice(&u32::try_from(q.group_size).map_err(|_| Error::shape("group size exceeds u32".to_string()))?.to_le_bytes());
    bytes.extend(q.scales.iter().map(|s| s.exponent() as u8));
    bytes.extend_from_slice(&q.packed);
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads `MXQ4` bytes back, rejecting malformed headers, size mismatches,
/// the E8M0 NaN exponent pattern, and non-zero padding.
pub fn load_quantized(path: impl AsRef<Path>) -> Result<MxQuantizedTensor> {
    let bytes = fs::read(&path)?;
    if bytes.len() < 16 || &bytes[0..4] != MXQ_MAGIC {
        return Err(Error::format("missing MXQ4 magic".to_string()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let group_size = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(format!("header declares empty shape {rows}x{cols}")));
    }
    if group_size == 0 || cols % group_size != 0 {
        return Err(Error::format(format!(
            "group size {group_size} does not divide {cols} columns"
        )));
    }
    let n_groups = rows * (cols / group_size);
    let n_elems = rows * cols;
    let expected = 16 + n_groups + (n_elems + 1) / 2;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "size mismatch: header wants {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let scales = bytes[16..16 + n_groups]
        .iter()
        .map(|&b| E8m0Scale::new(b as i8).map_err(|_| Error::format("scale exponent -128 (E8M0 NaN)".to_string())))
        .collect::<Result<Vec<_>>>()?;
    let packed = bytes[16 + n_groups..].to_vec();
    if n_elems % 2 == 1 && packed.last().map_or(false, |b| b >> 4 != 0) {
        return Err(Error::format("non-zero padding nibble".to_string()));
    }
    Ok(MxQuantizedTensor { rows, cols, group_size, scales, packed })
}

/// Parameters of the baseline affine integer quantizer:
/// `scale = (max - min) / (2^bits - 1)`, `zero_point = -round(min / scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntQuantParams {
    pub scale: f32,
    pub zero_point: i64,
    pub bits: u32,
}

/// Tensor quantized with a single affine scale/zero-point pair.
#[derive(Debug, Clone, PartialEq)]
pub struct IntQuantizedTensor {
    rows: usize,
    cols: usize,
    pub params: IntQuantParams,
    pub codes: Vec<u32>,
}

impl IntQuantizedTensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// Affine quantization to `bits` bits (2..=8). Rounding is ties-to-even.
/// Constant tensors take scale 1 so that integral constants reconstruct
/// exactly.
pub fn int_uniform_quantize(t: &Tensor, bits: u32) -> Result<IntQuantizedTensor> {
    if !(2..=8).contains(&bits) {
        return Err(Error::domain(format!("bit width must lie in 2..=8, got {bits}")));
    }
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &x in t.data() {
        min = min.min(x);
        max = max.max(x);
    }
    let qmax = (1u32 << bits) - 1;
    let mut scale = (max - min) / qmax as f32;
    if scale == 0.0 {
        scale = 1.0;
    }
    if !scale.is_finite() {
        return Err(Error::domain("value range overflows f32".to_string()));
    }
    let zero_point = -((min / scale).round_ties_even() as i64);
    let codes = t
        .data()
        .iter()
        .map(|&x| ((x / scale).round_ties_even() as i64 + zero_point).clamp(0, qmax as i64) as u32)
        .collect();
    Ok(IntQuantizedTensor {
        rows: t.rows(),
        cols: t.cols(),
        params: IntQuantParams { scale, zero_point, bits },
        codes,
    })
}

/// Inverse of [`int_uniform_quantize`]: `x = (code - zero_point) * scale`.
pub fn int_uniform_dequantize(q: &IntQuantizedTensor) -> Tensor {
    let data = q
        .codes
        .iter()
        .map(|&c| (c as i64 - q.params.zero_point) as f32 * q.params.scale)
        .collect();
    Tensor::from_raw(q.rows, q.cols, data)
}
