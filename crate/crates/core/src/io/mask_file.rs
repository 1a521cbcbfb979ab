//! Bit-packed epipolar mask container.
//!
//! Layout, little-endian:
//!
//! | offset | size | field                                    |
//! |--------|------|------------------------------------------|
//! | 0      | 8    | magic `CGMASK\0\0`                       |
//! | 8      | 4    | version (u32, currently 1)               |
//! | 12     | 4    | h (u32)                                  |
//! | 16     | 4    | w (u32)                                  |
//! | 20     | 8    | ratio (f64)                              |
//! | 28     | 4    | threshold mode (u32, 0 per-row, 1 global)|
//! | 32     | ...  | `h·w` rows of `ceil(2hw/8)` bytes each   |
//!
//! Within a row, key `k` is bit `7 − k % 8` of byte `k / 8` (most significant
//! bit first, as in PBM). Padding bits must be zero.

use std::path::Path;

use crate::epipolar::{EpipolarMask, TauMode};
use crate::error::{Error, Result};

use super::tensor_file::Reader;
use super::write_atomic;

pub const MASK_MAGIC: &[u8; 8] = b"CGMASK\0\0";
pub const MASK_VERSION: u32 = 1;

fn row_bytes(cols: usize) -> usize {
    cols.div_ceil(8)
}

pub fn encode_mask(mask: &EpipolarMask) -> Vec<u8> {
    let (rows, cols) = (mask.rows(), mask.cols());
    let rb = row_bytes(cols);
    let mut out = Vec::with_capacity(32 + rows * rb);
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&MASK_VERSION.to_le_bytes());
    out.extend_from_slice(&(mask.height() as u32).to_le_bytes());
    out.extend_from_slice(&(mask.width() as u32).to_le_bytes());
    out.extend_from_slice(&mask.ratio().to_le_bytes());
    let mode: u32 = match mask.mode() {
        TauMode::PerRow => 0,
        TauMode::Global => 1,
    };
    out.extend_from_slice(&mode.to_le_bytes());
    for q in 0..rows {
        let mut packed = vec![0u8; rb];
        for (k, &b) in mask.row(q).iter().enumerate() {
            if b {
                packed[k / 8] |= 0x80 >> (k % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<EpipolarMask> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != MASK_MAGIC {
        return Err(Error::Format("not a mask file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != MASK_VERSION {
        return Err(Error::Format(format!("unsupported mask version {version}")));
    }
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let ratio = r.f64()?;
    let mode = match r.u32()? {
        0 => TauMode::PerRow,
        1 => TauMode::Global,
        m => return Err(Error::Format(format!("unknown threshold mode {m}"))),
    };
    let rows = h
        .checked_mul(w)
        .ok_or_else(|| Error::Format("mask dims overflow".into()))?;
    let cols = rows * 2;
    let rb = row_bytes(cols);
    if r.remaining() != rows.saturating_mul(rb) {
        return Err(Error::Format(format!(
            "mask payload is {} bytes, {h}x{w} needs {}",
            r.remaining(),
            rows * rb
        )));
    }
    let payload = r.rest();
    let mut bits = Vec::with_capacity(rows * cols);
    for row in payload.chunks_exact(rb.max(1)).take(rows) {
        for k in 0..rb * 8 {
            let b = row[k / 8] & (0x80 >> (k % 8)) != 0;
            if k < cols {
                bits.push(b);
            } else if b {
                return Err(Error::Format("nonzero padding bit in mask row".into()));
            }
        }
    }
    EpipolarMask::from_bits(bits, h, w, ratio, mode)
}

pub fn write_mask(path: &Path, mask: &EpipolarMask) -> Result<()> {
    write_atomic(path, &encode_mask(mask))
}

pub fn read_mask(path: &Path) -> Result<EpipolarMask> {
    decode_mask(&std::fs::read(path)?)
}

/// Binary PGM (P5): one pixel per (query, key), 255 where attention is allowed.
pub fn mask_to_pgm(mask: &EpipolarMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.cols(), mask.rows()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn write_mask_pgm(path: &Path, mask: &EpipolarMask) -> Result<()> {
    write_atomic(path, &mask_to_pgm(mask))
}
