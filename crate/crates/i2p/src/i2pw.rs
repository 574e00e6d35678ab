//! `.i2pw` weight archives.
//!
//! ```text
//! header  "I2PW" | u32 version = 1 | u32 record count | u8 dimensionality tag
//! record  u32 name length | name (UTF-8) | u8 dtype (0 = f32) | u32 rank
//!         | u64 dims[rank] | f32 payload[product(dims)] | u32 crc32
//! ```
//!
//! All integers are little-endian. A record's CRC covers the 13 header bytes
//! followed by the record bytes up to the CRC itself, so a flipped header
//! byte is caught by the first record.

use i2p_core::archive::{ArchiveTensor, Dimensionality, WeightArchive};

use crate::bytes::Cursor;
use crate::error::{format_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"I2PW";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 13;
const DTYPE_F32: u8 = 0;

pub fn write_archive(a: &WeightArchive) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + a.records().iter().map(|r| 32 + r.name.len() + 8 * r.dims.len() + 4 * r.values.len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(a.len() as u32).to_le_bytes());
    out.push(a.dimensionality() as u8);
    for r in a.records() {
        let start = out.len();
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.push(DTYPE_F32);
        out.extend_from_slice(&(r.dims.len() as u32).to_le_bytes());
        for d in &r.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = record_crc(&out[..HEADER_LEN], &out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    out
}

fn record_crc(header: &[u8], record: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(header);
    h.update(record);
    h.finalize()
}

pub fn read_archive(bytes: &[u8]) -> Result<WeightArchive> {
    let mut c = Cursor::new(bytes);
    if c.take(4, "magic")? != MAGIC {
        return Err(format_err!("bad magic, not an .i2pw archive"));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(format_err!("unsupported archive version {version}"));
    }
    let count = c.u32("record count")?;
    let tag = c.u8("dimensionality tag")?;
    let header = &bytes[..HEADER_LEN];
    // Decoded before the tag is trusted so a corrupted tag reports as corruption.
    let mut records = Vec::new();
    for i in 0..count {
        let start = c.pos();
        let name_len = c.u32("name length")? as usize;
        let name_raw = c.take(name_len, "tensor name")?;
        let dtype = c.u8("dtype")?;
        let rank = c.u32("rank")? as usize;
        if rank.checked_mul(8).is_none_or(|b| b > c.remaining()) {
            return Err(format_err!("truncated stream in dims of record {i}"));
        }
        let dims = (0..rank).map(|_| c.u64("dims")).collect::<Result<Vec<u64>>>()?;
        let n = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d)).filter(|&n| n.saturating_mul(4) <= c.remaining() as u64);
        let Some(n) = n else {
            return Err(format_err!("truncated stream in payload of record {i}"));
        };
        let values = c.f32s(n as usize, "payload")?;
        let computed = record_crc(header, &bytes[start..c.pos()]);
        let stored = c.u32("crc")?;
        let name = String::from_utf8_lossy(name_raw).into_owned();
        if stored != computed {
            return Err(Error::Corruption { tensor: name, stored, computed });
        }
        let name = String::from_utf8(name_raw.to_vec()).map_err(|_| format_err!("record {i} name is not UTF-8"))?;
        if dtype != DTYPE_F32 {
            return Err(format_err!("tensor `{name}` has unsupported dtype {dtype}"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(format_err!("tensor `{name}` holds non-finite value {v}"));
        }
        records.push(ArchiveTensor { name, dims, values });
    }
    if c.remaining() != 0 {
        return Err(format_err!("{} trailing bytes after the last record", c.remaining()));
    }
    let dim = Dimensionality::from_tag(tag).ok_or_else(|| format_err!("unknown dimensionality tag {tag}"))?;
    let mut a = WeightArchive::new(dim);
    for r in records {
        a.insert(r).map_err(|e| format_err!("{e}"))?;
    }
    Ok(a)
}
