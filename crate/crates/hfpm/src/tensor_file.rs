//! Binary tensor container.
//!
//! Layout, all little-endian: magic `HFPM`, `u16` version, `u8` dtype
//! (f32 = 0, i8 = 1, u8 = 2), `u8` rank, `rank × u32` dims, then the
//! row-major payload.

use std::fs;
use std::path::Path;

use hfpm_core::DenseMatrix;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"HFPM";
pub const VERSION: u16 = 1;
const HEADER: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TensorFileError {
    #[error("not a tensor file (bad magic)")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("file truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("payload has {extra} trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("dims multiply to {elements}, data has {len}")]
    LengthMismatch { elements: usize, len: usize },
    #[error("expected {expected}")]
    WrongKind { expected: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    I8 = 1,
    U8 = 2,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I8 | DType::U8 => 1,
        }
    }

    fn from_code(c: u8) -> std::result::Result<Self, TensorFileError> {
        match c {
            0 => Ok(DType::F32),
            1 => Ok(DType::I8),
            2 => Ok(DType::U8),
            other => Err(TensorFileError::UnknownDtype(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    I8(Vec<i8>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::I8(_) => DType::I8,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::I8(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl TensorFile {
    pub fn new(dims: Vec<u32>, data: TensorData) -> std::result::Result<Self, TensorFileError> {
        let elements = dims.iter().map(|&d| d as usize).product::<usize>();
        if dims.len() > u8::MAX as usize || elements != data.len() {
            return Err(TensorFileError::LengthMismatch {
                elements,
                len: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    /// Stored as f32.
    pub fn from_matrix(m: &DenseMatrix) -> Self {
        Self {
            dims: vec![m.rows() as u32, m.cols() as u32],
            data: TensorData::F32(m.as_slice().iter().map(|&v| v as f32).collect()),
        }
    }

    pub fn from_vector(v: &[f64]) -> Self {
        Self {
            dims: vec![v.len() as u32],
            data: TensorData::F32(v.iter().map(|&x| x as f32).collect()),
        }
    }

    pub fn to_matrix(&self) -> std::result::Result<DenseMatrix, TensorFileError> {
        match (&self.data, self.dims.as_slice()) {
            (TensorData::F32(v), &[r, c]) => DenseMatrix::new(r as usize, c as usize, v.iter().map(|&x| x as f64).collect())
                .map_err(|_| TensorFileError::WrongKind {
                    expected: "a finite f32 matrix",
                }),
            _ => Err(TensorFileError::WrongKind {
                expected: "a rank-2 f32 tensor",
            }),
        }
    }

    pub fn to_vector(&self) -> std::result::Result<Vec<f64>, TensorFileError> {
        match (&self.data, self.dims.len()) {
            (TensorData::F32(v), 1) => Ok(v.iter().map(|&x| x as f64).collect()),
            _ => Err(TensorFileError::WrongKind {
                expected: "a rank-1 f32 tensor",
            }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dt = self.data.dtype();
        let mut out = Vec::with_capacity(HEADER + 4 * self.dims.len() + self.data.len() * dt.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(dt as u8);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I8(v) => out.extend(v.iter().map(|&x| x as u8)),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> std::result::Result<Self, TensorFileError> {
        let need = |n: usize| {
            if b.len() < n {
                Err(TensorFileError::Truncated { need: n, have: b.len() })
            } else {
                Ok(())
            }
        };
        need(4)?;
        if &b[..4] != MAGIC {
            return Err(TensorFileError::BadMagic);
        }
        need(HEADER)?;
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(TensorFileError::UnsupportedVersion(version));
        }
        let dt = DType::from_code(b[6])?;
        let rank = b[7] as usize;
        let body = HEADER + 4 * rank;
        need(body)?;
        let dims: Vec<u32> = b[HEADER..body]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let elements = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or(TensorFileError::LengthMismatch { elements: usize::MAX, len: 0 })?;
        let payload_len = elements
            .checked_mul(dt.size())
            .ok_or(TensorFileError::LengthMismatch { elements, len: 0 })?;
        need(body + payload_len)?;
        if b.len() > body + payload_len {
            return Err(TensorFileError::TrailingBytes {
                extra: b.len() - body - payload_len,
            });
        }
        let p = &b[body..];
        let data = match dt {
            DType::F32 => TensorData::F32(
                p.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::I8 => TensorData::I8(p.iter().map(|&x| x as i8).collect()),
            DType::U8 => TensorData::U8(p.to_vec()),
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|source| CliError::Tensor {
            path: path.to_path_buf(),
            source,
        })
    }
}
