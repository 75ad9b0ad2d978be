//! Window persistence.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CFHW"  u8 version=1  u8 threshold  u32 capacity  u32 count
//! count × { u64 hash  u16 id_len  id_len bytes UTF-8 }
//! ```
//!
//! Records are written oldest first.

use thiserror::Error;

use super::{DedupConfig, Engine, HashWindow};
use crate::phash::PerceptualHash;

pub const MAGIC: &[u8; 4] = b"CFHW";
pub const VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("corrupt snapshot at byte {offset}: {reason}")]
pub struct SnapshotError {
    pub offset: usize,
    pub reason: String,
}

pub fn snapshot(w: &HashWindow) -> Vec<u8> {
    let cfg = w.config();
    let mut out = Vec::with_capacity(14 + w.len() * 18);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(cfg.threshold() as u8);
    out.extend_from_slice(&(cfg.capacity() as u32).to_le_bytes());
    out.extend_from_slice(&(w.len() as u32).to_le_bytes());
    for (h, id) in w.entries() {
        out.extend_from_slice(&h.0.to_le_bytes());
        let id = id.as_bytes();
        // ids longer than u16::MAX are truncated at a char boundary
        let mut n = id.len().min(u16::MAX as usize);
        while std::str::from_utf8(&id[..n]).is_err() {
            n -= 1;
        }
        out.extend_from_slice(&(n as u16).to_le_bytes());
        out.extend_from_slice(&id[..n]);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], SnapshotError> {
        if self.bytes.len() - self.pos < n {
            return Err(SnapshotError {
                offset: self.pos,
                reason: format!("truncated {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, SnapshotError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, SnapshotError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Rebuilds a window from snapshot bytes, indexing it with `engine`.
pub fn restore(bytes: &[u8], engine: Engine) -> Result<HashWindow, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    let bad = |offset: usize, reason: String| SnapshotError { offset, reason };

    if r.take(4, "magic")? != MAGIC {
        return Err(bad(0, "bad magic".into()));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(bad(4, format!("unsupported version {version}")));
    }
    let threshold = r.u8("threshold")?;
    let capacity = r.u32("capacity")?;
    let config = DedupConfig::new(u32::from(threshold), capacity as usize, engine)
        .map_err(|e| bad(5, e.to_string()))?;
    let count_at = r.pos;
    let count = r.u32("count")?;
    if count > capacity {
        return Err(bad(
            count_at,
            format!("count {count} exceeds capacity {capacity}"),
        ));
    }

    let mut w = HashWindow::new(config);
    for i in 0..count {
        let hash = r.u64("hash")?;
        let len = r.u16("id length")?;
        let id_at = r.pos;
        let id = r.take(usize::from(len), "id")?;
        let id = std::str::from_utf8(id)
            .map_err(|_| bad(id_at, format!("record {i}: id is not UTF-8")))?;
        w.push(PerceptualHash(hash), id.to_owned());
    }
    if r.pos != bytes.len() {
        return Err(bad(r.pos, "trailing bytes".into()));
    }
    Ok(w)
}
