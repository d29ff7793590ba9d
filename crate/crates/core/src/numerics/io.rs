//! DGT1 binary tensor format.
//!
//! ```text
//! "DGT1"            4 bytes magic
//! dtype             u8, 0 = f32, 1 = f64
//! rank              u8
//! dims              rank x u32 little-endian
//! payload           row-major values, little-endian
//! ```

use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DGT1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

pub fn encode(t: &Tensor, dtype: Dtype) -> Vec<u8> {
    let width = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + width * t.numel());
    out.extend_from_slice(MAGIC);
    out.push(dtype as u8);
    out.push(t.rank() as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match dtype {
        Dtype::F32 => {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Cursor over a byte buffer that reports failures with their offset.
pub(crate) struct Reader<'a> {
    what: &'a str,
    bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(what: &'a str, bytes: &'a [u8]) -> Self {
        Reader { what, bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(
                self.what,
                self.bytes.len(),
                format!("truncated: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn error(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.what, offset, msg)
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub(crate) fn read_tensor(r: &mut Reader<'_>) -> Result<(Tensor, Dtype)> {
    let start = r.pos;
    if r.take(4)? != MAGIC {
        return Err(r.error(start, "bad magic, expected DGT1"));
    }
    let dtype_at = r.pos;
    let dtype = match r.u8()? {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(r.error(dtype_at, format!("unknown dtype code {other}"))),
    };
    let rank = r.u8()? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let at = r.pos;
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(r.error(at, "zero extent"));
        }
        dims.push(d);
    }
    let n: usize = dims.iter().product();
    let data: Vec<f64> = match dtype {
        Dtype::F32 => {
            r.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
        }
        Dtype::F64 => r.take(8 * n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    Ok((Tensor::from_parts(dims, data), dtype))
}

pub fn decode(bytes: &[u8]) -> Result<(Tensor, Dtype)> {
    let mut r = Reader::new("DGT1 tensor", bytes);
    let out = read_tensor(&mut r)?;
    if !r.at_end() {
        return Err(r.error(r.pos, "trailing bytes after payload"));
    }
    Ok(out)
}

pub fn save(path: &Path, t: &Tensor, dtype: Dtype) -> Result<()> {
    fs::write(path, encode(t, dtype)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut r = Reader::new(&name, &bytes);
    let (t, _) = read_tensor(&mut r)?;
    if !r.at_end() {
        return Err(r.error(r.pos, "trailing bytes after payload"));
    }
    Ok(t)
}
