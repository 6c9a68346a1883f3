//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     4 bytes  "CCOR"
//! version   u32      1
//! segments  u32
//! per segment:
//!   name_len u32, name (UTF-8), rows u32, cols u32, rows·cols × f64
//! ```
//!
//! Segments are written in parameter-set order, so equal parameter sets
//! always produce identical bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::{read_file, write_atomic};
use crate::numcore::{Matrix, ParamSet};

pub const MAGIC: &[u8; 4] = b"CCOR";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ParamSet<f64>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + params.num_params() * 8 + params.num_segments() * 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(params.num_segments(), "segment count")?.to_le_bytes());
    for seg in params.segments() {
        let name = seg.name.as_bytes();
        out.extend_from_slice(&u32_of(name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&u32_of(seg.value.rows(), "rows")?.to_le_bytes());
        out.extend_from_slice(&u32_of(seg.value.cols(), "cols")?.to_le_bytes());
        for v in seg.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_of(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::input(format!("checkpoint {what} {n} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            msg: format!("{} (offset {})", msg.into(), self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.fail("truncated checkpoint")),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Parses a checkpoint; `path` is only used in error messages.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ParamSet<f64>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic, expected CCOR"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.fail("segment name is not UTF-8"))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| r.fail("segment shape overflows"))?;
        let raw = r.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let m = Matrix::new(rows, cols, data).map_err(|e| r.fail(format!("segment {name}: {e}")))?;
        params
            .push(name, m)
            .map_err(|e| r.fail(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after last segment"));
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &ParamSet<f64>) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params)?)
}

pub fn load_checkpoint(path: &Path) -> Result<ParamSet<f64>> {
    decode_checkpoint(&read_file(path)?, path)
}
