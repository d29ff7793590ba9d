//! Parameter store serialization.
//!
//! ```text
//! count             u32 little-endian
//! count x {
//!   name_len        u16 little-endian
//!   name            UTF-8
//!   tensor          DGT1 (f64)
//! }
//! ```
//!
//! Entries are written in lexicographic name order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::io::{encode, read_tensor, Dtype, Reader};
use crate::numerics::{ParamKind, ParamStore};

pub fn encode_checkpoint(store: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, p) in store.iter() {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len()).map_err(|_| Error::config(format!("parameter name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(bytes);
        out.extend_from_slice(&encode(&p.value, Dtype::F64));
    }
    Ok(out)
}

/// Entries ending in `.running_mean` / `.running_var` are restored as
/// buffers, everything else as trainable.
pub fn decode_checkpoint(what: &str, bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader::new(what, bytes);
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let at = r.pos;
        let len = r.u16()? as usize;
        let name =
            std::str::from_utf8(r.take(len)?).map_err(|_| r.error(at + 2, "parameter name is not UTF-8"))?.to_string();
        let (tensor, _) = read_tensor(&mut r)?;
        let kind = if name.ends_with(".running_mean") || name.ends_with(".running_var") {
            ParamKind::Buffer
        } else {
            ParamKind::Trainable
        };
        store.insert(&name, tensor, kind).map_err(|_| r.error(at, format!("duplicate entry {name}")))?;
    }
    if !r.at_end() {
        return Err(r.error(r.pos, "trailing bytes after last entry"));
    }
    Ok(store)
}

pub fn save_checkpoint(path: &Path, store: &ParamStore) -> Result<()> {
    fs::write(path, encode_checkpoint(store)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&path.display().to_string(), &bytes)
}
