//! OBZT: the binary tensor container used for images and attribution maps.
//!
//! ```text
//! 0..4   magic "OBZT"
//! 4      version (1)
//! 5      dtype (1 = f32 little-endian)
//! 6      ndim (1..=4)
//! 7      reserved (0)
//! 8..    ndim × u32 LE dims, then the row-major payload
//! ```

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OBZT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 8;
pub const MAX_NDIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, values: Vec<f32>) -> Result<Self> {
        check_shape(&dims, &values)?;
        Ok(Tensor { dims, values })
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        encode_tensor(&self.dims, &self.values)
    }
}

fn check_shape(dims: &[u32], values: &[f32]) -> Result<()> {
    if dims.is_empty() || dims.len() > MAX_NDIM {
        return Err(Error::invalid("tensor must have 1 to 4 dimensions"));
    }
    if dims.contains(&0) {
        return Err(Error::invalid("tensor dimensions must be positive"));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| Error::invalid("tensor element count overflows"))?;
    if count != values.len() {
        return Err(Error::invalid("tensor value count does not match dims"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("tensor values must be finite"));
    }
    Ok(())
}

pub fn encode_tensor(dims: &[u32], values: &[f32]) -> Result<Vec<u8>> {
    check_shape(dims, values)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * dims.len() + 4 * values.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_F32, dims.len() as u8, 0]);
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn corrupt(offset: usize, reason: &'static str) -> Error {
    Error::CorruptTensor { offset, reason }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if let Some(i) = MAGIC.iter().zip(bytes).position(|(a, b)| a != b) {
        return Err(corrupt(i, "bad magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(bytes.len(), "truncated header"));
    }
    if bytes[4] != VERSION {
        return Err(corrupt(4, "unsupported version"));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(corrupt(5, "unsupported dtype"));
    }
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(corrupt(6, "ndim out of range"));
    }
    if bytes[7] != 0 {
        return Err(corrupt(7, "reserved byte not zero"));
    }
    let dims_end = HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(corrupt(bytes.len(), "truncated dims"));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut count: u64 = 1;
    for (i, chunk) in bytes[HEADER_LEN..dims_end].chunks_exact(4).enumerate() {
        let d = u32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if d == 0 {
            return Err(corrupt(HEADER_LEN + 4 * i, "zero dimension"));
        }
        count = count.saturating_mul(d as u64);
        dims.push(d);
    }
    let payload = &bytes[dims_end..];
    let expected = count.saturating_mul(4);
    if (payload.len() as u64) < expected {
        return Err(corrupt(bytes.len(), "truncated payload"));
    }
    if payload.len() as u64 > expected {
        return Err(corrupt(dims_end + expected as usize, "trailing bytes"));
    }
    let mut values = Vec::with_capacity(count as usize);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(corrupt(dims_end + 4 * i, "non-finite value"));
        }
        values.push(v);
    }
    Ok(Tensor { dims, values })
}
