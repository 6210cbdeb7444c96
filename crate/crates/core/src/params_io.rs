//! Flat little-endian parameter file.
//!
//! ```text
//! "MLPW"                     4 bytes magic
//! u32 layer_count
//! per layer:
//!   u32 fan_in, u32 fan_out
//!   f64 weights[fan_in * fan_out]   row-major
//!   f64 biases[fan_out]
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{Layer, Params};

pub const MAGIC: &[u8; 4] = b"MLPW";

pub fn to_bytes(params: &Params) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + params.layers.len() * 8 + params.num_params() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        out.extend_from_slice(&(layer.fan_in() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.fan_out() as u32).to_le_bytes());
        for v in layer.weights.data().iter().chain(layer.biases.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("params file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Params> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected MLPW".into()));
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(Error::Format("params file declares zero layers".into()));
    }
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let fan_in = r.u32()? as usize;
        let fan_out = r.u32()? as usize;
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Format(format!("layer {i} has a zero dimension")));
        }
        let weights = Matrix::new(fan_in, fan_out, r.f64s(fan_in * fan_out)?)?;
        let biases = Matrix::new(1, fan_out, r.f64s(fan_out)?)?;
        layers.push(Layer { weights, biases });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last layer",
            bytes.len() - r.pos
        )));
    }
    Params::from_layers(layers).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_params(path: impl AsRef<Path>, params: &Params) -> Result<()> {
    fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn read_params(path: impl AsRef<Path>) -> Result<Params> {
    from_bytes(&fs::read(path)?)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// FNV-1a over the exported parameter bytes.
pub fn params_digest(params: &Params) -> u64 {
    fnv1a64(&to_bytes(params))
}
