//! Symmetric per-tensor INT8 quantization and offset-binary cell encoding.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::DenseMatrix;

/// Offset added to a signed weight so it can be stored on a non-negative
/// conductance.
pub const WEIGHT_OFFSET: i32 = 128;

/// Signed 8-bit matrix with one scale: `real = scale · int`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i8>,
    scale: f64,
}

impl QuantMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i8>, scale: f64) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid("quantized matrix length does not match shape"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("quantization scale must be positive and finite"));
        }
        Ok(Self {
            rows,
            cols,
            data,
            scale,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn data(&self) -> &[i8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
            scale: self.scale,
        }
    }

    /// Exact `self · x` in integers (`x.len() == cols`).
    pub fn gemv_exact(&self, x: &[i8]) -> Result<Vec<i64>> {
        if x.len() != self.cols {
            return Err(Error::invalid("gemv length mismatch"));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(&w, &a)| w as i64 * a as i64)
                    .sum()
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuantVector {
    pub data: Vec<i8>,
    pub scale: f64,
}

impl QuantVector {
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn scale_for(max_abs: f64) -> f64 {
    if max_abs == 0.0 {
        1.0
    } else {
        max_abs / 127.0
    }
}

#[inline]
fn to_i8(v: f64, scale: f64) -> i8 {
    let q = math::round_even(v / scale);
    q.clamp(-128.0, 127.0) as i8
}

/// Per-tensor symmetric quantization, `scale = max|m| / 127`, rounding half
/// to even. An all-zero input gets scale 1.
pub fn quantize(m: &DenseMatrix) -> Result<QuantMatrix> {
    if !m.is_finite() {
        return Err(Error::invalid("cannot quantize non-finite values"));
    }
    let scale = scale_for(m.max_abs());
    let data = m.as_slice().iter().map(|&v| to_i8(v, scale)).collect();
    QuantMatrix::new(m.rows(), m.cols(), data, scale)
}

pub fn quantize_vector(x: &[f64]) -> Result<QuantVector> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot quantize non-finite values"));
    }
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = scale_for(max);
    Ok(QuantVector {
        data: x.iter().map(|&v| to_i8(v, scale)).collect(),
        scale,
    })
}

pub fn dequantize(q: &QuantMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(q.rows, q.cols, |r, c| q.get(r, c) as f64 * q.scale)
}

pub fn dequantize_vector(q: &QuantVector) -> Vec<f64> {
    q.data.iter().map(|&v| v as f64 * q.scale).collect()
}

/// Weights shifted to `w + 128 ∈ [0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub words: Vec<u8>,
}

impl EncodedMatrix {
    /// Validates raw words (each must lie in `[0, 255]`).
    pub fn from_words(rows: usize, cols: usize, words: &[i32]) -> Result<Self> {
        if words.len() != rows * cols {
            return Err(Error::invalid("encoded matrix length does not match shape"));
        }
        let mut out = Vec::with_capacity(words.len());
        for &w in words {
            if !(0..=255).contains(&w) {
                return Err(Error::invalid(alloc::format!("cell word {w} outside [0, 255]")));
            }
            out.push(w as u8);
        }
        Ok(Self {
            rows,
            cols,
            words: out,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut words = Vec::with_capacity(self.words.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                words.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            words,
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.words[r * self.cols + c]
    }
}

pub fn offset_encode(q: &QuantMatrix) -> EncodedMatrix {
    EncodedMatrix {
        rows: q.rows,
        cols: q.cols,
        words: q.data.iter().map(|&w| (w as i32 + WEIGHT_OFFSET) as u8).collect(),
    }
}

/// Recovers `Σ a_i w_i` from an accumulation over offset-encoded words:
/// `acc − 128·Σ a_i`.
#[inline]
pub fn offset_correct(acc: i64, input_sum: i64) -> i64 {
    acc - WEIGHT_OFFSET as i64 * input_sum
}
