//! Binary feature matrix file.
//!
//! ```text
//! magic     8 bytes  "TCFEAT\0\x01"
//! columns   u32 LE
//! per column: name length u16 LE, UTF-8 name
//! points    u64 LE
//! values    points * columns f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use terraclass_core::FeatureMatrix;

use crate::error::{Error, Location, Result};

pub const MAGIC: &[u8; 8] = b"TCFEAT\0\x01";

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.values().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.n_cols() as u32).to_le_bytes());
    for n in m.names() {
        out.extend_from_slice(&(n.len() as u16).to_le_bytes());
        out.extend_from_slice(n.as_bytes());
    }
    out.extend_from_slice(&(m.n_rows() as u64).to_le_bytes());
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    off: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.off < n {
            return Err(Error::parse(
                self.path,
                Location::Byte(self.off as u64),
                format!("truncated file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let mut c = Cursor { bytes, off: 0, path };
    if c.take(8, "magic")? != MAGIC {
        return Err(Error::parse(path, Location::Byte(0), "not a feature matrix file"));
    }
    let n_cols = u32::from_le_bytes(c.take(4, "column count")?.try_into().unwrap()) as usize;
    let mut names = Vec::with_capacity(n_cols.min(1 << 16));
    for _ in 0..n_cols {
        let at = c.off;
        let len = u16::from_le_bytes(c.take(2, "column name length")?.try_into().unwrap()) as usize;
        let raw = c.take(len, "column name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(path, Location::Byte(at as u64), "column name is not UTF-8"))?;
        names.push(name.to_string());
    }
    let n_rows = u64::from_le_bytes(c.take(8, "point count")?.try_into().unwrap()) as usize;
    let n_values = n_rows
        .checked_mul(n_cols)
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| Error::parse(path, Location::Byte(c.off as u64 - 8), "point count overflows"))?;
    let raw = c.take(n_values * 4, "values")?;
    if c.off != bytes.len() {
        return Err(Error::parse(path, Location::Byte(c.off as u64), "trailing bytes after values"));
    }
    let values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(FeatureMatrix::new(names, values)?)
}

pub fn write_features(m: &FeatureMatrix, path: &Path) -> Result<()> {
    fs::write(path, encode_features(m)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}
