//! Dense f32 tensor container.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size  | field                              |
//! |--------|-------|------------------------------------|
//! | 0      | 8     | magic `CGTENSOR`                   |
//! | 8      | 4     | version (u32, currently 1)         |
//! | 12     | 4     | dtype tag (u32, 0 = f32)           |
//! | 16     | 4     | rank (u32)                         |
//! | 20     | 8·r   | dims (u64 each)                    |
//! | ...    | 4·n   | payload, f32 LE, row-major         |
//!
//! where `n` is the product of the dims. Nothing may follow the payload.

use std::path::Path;

use crate::error::{Error, Result};
use crate::plucker::PluckerTensor;
use crate::scalar::Real;

use super::write_atomic;

pub const TENSOR_MAGIC: &[u8; 8] = b"CGTENSOR";
pub const TENSOR_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::shape("tensor dims overflow"))?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} hold {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_plucker<T: Real>(t: &PluckerTensor<T>) -> Self {
        let data = t
            .data()
            .iter()
            .map(|x| x.to_f32().unwrap_or(f32::NAN))
            .collect();
        Self {
            dims: t.shape().to_vec(),
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != TENSOR_MAGIC {
            return Err(Error::Format("not a tensor file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != TENSOR_VERSION {
            return Err(Error::Format(format!(
                "unsupported tensor version {version}"
            )));
        }
        let dtype = r.u32()?;
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype tag {dtype}")));
        }
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| {
                let d = r.u64()?;
                usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("tensor dims overflow".into()))?;
        if r.remaining() != n.saturating_mul(4) {
            return Err(Error::Format(format!(
                "payload is {} bytes, dims {dims:?} need {}",
                r.remaining(),
                n.saturating_mul(4)
            )));
        }
        let data = r
            .rest()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(path: &Path, t: &TensorFile) -> Result<()> {
    write_atomic(path, &t.to_bytes())
}

pub fn read_tensor(path: &Path) -> Result<TensorFile> {
    TensorFile::from_bytes(&std::fs::read(path)?)
}

/// Bounds-checked little-endian cursor shared by the binary readers.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }
}
