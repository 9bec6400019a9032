//! Flat binary tensor files (`.ten`): little-endian header
//! (rank: u32, one u32 per dim) followed by the f64 payload.

use super::Tensor;
use crate::error::{Error, Result};
use std::path::Path;

const MAX_RANK: u32 = 8;

impl Tensor {
    pub fn to_ten_bytes(&self) -> Vec<u8> {
        let shape = self.shape();
        let data = self.data();
        let mut out = Vec::with_capacity(4 + 4 * shape.len() + 8 * data.len());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in &shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_ten_bytes(bytes: &[u8]) -> Result<Tensor> {
        let bad = |reason: &str| Error::Format(format!("invalid .ten data: {reason}"));
        if bytes.len() < 4 {
            return Err(bad("truncated header"));
        }
        let rank = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        if rank == 0 || rank > MAX_RANK {
            return Err(bad(&format!("rank {rank} out of range 1..={MAX_RANK}")));
        }
        let header = 4 + 4 * rank as usize;
        if bytes.len() < header {
            return Err(bad("truncated dims"));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut count: usize = 1;
        for i in 0..rank as usize {
            let d = u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
            if d == 0 {
                return Err(bad("zero dimension"));
            }
            count = count
                .checked_mul(d)
                .ok_or_else(|| bad("element count overflow"))?;
            shape.push(d);
        }
        let expect = header
            .checked_add(count.checked_mul(8).ok_or_else(|| bad("payload overflow"))?)
            .ok_or_else(|| bad("payload overflow"))?;
        if bytes.len() != expect {
            return Err(bad(&format!(
                "payload length {} does not match header ({} expected)",
                bytes.len(),
                expect
            )));
        }
        let data: Vec<f64> = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(shape, data)
    }
}

pub fn save_ten(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, tensor.to_ten_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_ten(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Tensor::from_ten_bytes(&bytes)
}
