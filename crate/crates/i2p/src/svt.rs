//! `.svt` sparse tensors.
//!
//! ```text
//! "I2PS" | u32 version = 1 | u32 coord count N | u32 channels C | f32 voxel size
//! | i32 (x, y, z) * N | f32 features [N, C] row-major | u32 crc32
//! ```
//!
//! The trailing CRC covers every preceding byte. Only single-sample tensors
//! at stride level 0 are representable.

use std::sync::Arc;

use i2p_core::voxel::{Coord, CoordSet, SparseVoxelTensor};
use i2p_core::Matrix;

use crate::bytes::Cursor;
use crate::error::{format_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"I2PS";
pub const VERSION: u32 = 1;

pub fn write_svt(t: &SparseVoxelTensor<f32>) -> Result<Vec<u8>> {
    if t.coords().batch_size() > 1 || t.stride_level() != 0 {
        return Err(format_err!(".svt stores single-sample level-0 tensors only"));
    }
    let vs = t.voxel_size() as f32;
    if vs as f64 != t.voxel_size() {
        return Err(format_err!("voxel size {} is not representable as f32", t.voxel_size()));
    }
    let mut out = Vec::with_capacity(24 + t.len() * (12 + 4 * t.channels()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.len() as u32).to_le_bytes());
    out.extend_from_slice(&(t.channels() as u32).to_le_bytes());
    out.extend_from_slice(&vs.to_le_bytes());
    for c in t.coords().coords() {
        for v in c.ijk {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in t.feats().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn read_svt(bytes: &[u8]) -> Result<SparseVoxelTensor<f32>> {
    if bytes.len() < 4 {
        return Err(format_err!("truncated stream reading checksum"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    let mut c = Cursor::new(body);
    if c.take(4, "magic")? != MAGIC {
        return Err(format_err!("bad magic, not an .svt file"));
    }
    if stored != computed {
        return Err(Error::Corruption { tensor: "svt".into(), stored, computed });
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(format_err!("unsupported .svt version {version}"));
    }
    let n = c.u32("coord count")? as usize;
    let ch = c.u32("channel width")? as usize;
    let vs = f32::from_le_bytes(c.take(4, "voxel size")?.try_into().expect("4 bytes"));
    let need = n.checked_mul(12 + 4 * ch).ok_or_else(|| format_err!("sizes overflow"))?;
    if need != c.remaining() {
        return Err(format_err!("body holds {} bytes, header implies {need}", c.remaining()));
    }
    let coords = (0..n)
        .map(|_| Ok(Coord::new(0, [c.i32("x")?, c.i32("y")?, c.i32("z")?])))
        .collect::<Result<Vec<_>>>()?;
    let feats = c.f32s(n * ch, "features")?;
    if let Some(v) = feats.iter().find(|v| !v.is_finite()) {
        return Err(format_err!("non-finite feature {v}"));
    }
    let set = CoordSet::with_batch_size(coords, 0, 1)?;
    Ok(SparseVoxelTensor::new(Arc::new(set), Matrix::from_vec(n, ch, feats)?, vs as f64)?)
}
