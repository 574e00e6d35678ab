//! Kernel maps: per-offset `(input_row, output_row)` pairs driving
//! gather-multiply-scatter sparse convolution.
//!
//! Kernel offset `kz*K*K + kx*K + ky` displaces a site by
//! `(kx - pad, ky - pad, kz - pad)` in `(x, y, z)`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::voxel::{Coord, CoordSet};

pub const MAX_KERNEL: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMap {
    kernel: usize,
    stride: usize,
    transposed: bool,
    input_len: usize,
    pairs: Vec<Vec<(u32, u32)>>,
    output: Arc<CoordSet>,
}

impl KernelMap {
    #[inline]
    pub fn kernel(&self) -> usize {
        self.kernel
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    #[inline]
    pub fn volume(&self) -> usize {
        self.kernel * self.kernel * self.kernel
    }

    #[inline]
    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// Pairs of kernel offset `offset`, ordered by output row.
    #[inline]
    pub fn pairs(&self, offset: usize) -> &[(u32, u32)] {
        &self.pairs[offset]
    }

    #[inline]
    pub fn output(&self) -> &Arc<CoordSet> {
        &self.output
    }

    pub fn total_pairs(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }
}

/// `(x, y, z)` displacement of kernel offset `offset` before padding.
#[inline]
pub fn offset_taps(offset: usize, kernel: usize) -> [i32; 3] {
    let kz = offset / (kernel * kernel);
    let kx = (offset / kernel) % kernel;
    let ky = offset % kernel;
    [kx as i32, ky as i32, kz as i32]
}

fn check_supported(kernel: usize, stride: usize) -> Result<()> {
    if kernel == 0 || kernel > MAX_KERNEL || !(stride == 1 || stride == 2) {
        bail!(Unsupported, "kernel {kernel} with stride {stride}");
    }
    Ok(())
}

/// Stride 1 keeps the active set (submanifold); stride 2 activates
/// `floor(c / 2)` for every active `c`. Padding is `kernel / 2`.
pub fn build_kernel_map(input: &Arc<CoordSet>, kernel: usize, stride: usize) -> Result<KernelMap> {
    check_supported(kernel, stride)?;
    let output = if stride == 1 {
        input.clone()
    } else {
        Arc::new(CoordSet::with_batch_size(
            input.downsampled(stride as i32),
            input.stride_level() + 1,
            input.batch_size(),
        )?)
    };
    let pad = (kernel / 2) as i32;
    let s = stride as i32;
    let volume = kernel * kernel * kernel;
    let mut pairs = vec![Vec::new(); volume];
    for (offset, list) in pairs.iter_mut().enumerate() {
        let t = offset_taps(offset, kernel);
        for (o_row, o) in output.coords().iter().enumerate() {
            let c = Coord::new(o.batch, [0, 1, 2].map(|a| o.ijk[a] * s + t[a] - pad));
            if let Some(i) = input.index_of(&c) {
                list.push((i as u32, o_row as u32));
            }
        }
    }
    Ok(KernelMap { kernel, stride, transposed: false, input_len: input.len(), pairs, output })
}

/// Transposed map onto a cached target set: input `i` feeds target
/// `stride * i + tap` (no padding). Every target must be fed by some input.
pub fn build_transposed_map(input: &CoordSet, target: &Arc<CoordSet>, kernel: usize, stride: usize) -> Result<KernelMap> {
    check_supported(kernel, stride)?;
    let step = if stride == 2 { 1 } else { 0 };
    if target.stride_level() + step != input.stride_level() {
        bail!(
            Coordinate,
            "target level {} cannot be reached from level {} with stride {stride}",
            target.stride_level(),
            input.stride_level()
        );
    }
    if target.batch_size() != input.batch_size() {
        bail!(Coordinate, "target batch {} vs input batch {}", target.batch_size(), input.batch_size());
    }
    let s = stride as i32;
    let volume = kernel * kernel * kernel;
    let mut pairs = vec![Vec::new(); volume];
    let mut fed = vec![false; target.len()];
    for (offset, list) in pairs.iter_mut().enumerate() {
        let t = offset_taps(offset, kernel);
        for (o_row, o) in target.coords().iter().enumerate() {
            let rel = [0, 1, 2].map(|a| o.ijk[a] - t[a]);
            if rel.iter().any(|r| r.rem_euclid(s) != 0) {
                continue;
            }
            let c = Coord::new(o.batch, rel.map(|r| r.div_euclid(s)));
            if let Some(i) = input.index_of(&c) {
                list.push((i as u32, o_row as u32));
                fed[o_row] = true;
            }
        }
    }
    if let Some(row) = fed.iter().position(|f| !f) {
        bail!(Coordinate, "target coordinate {:?} is unreachable from the input set", target.coords()[row]);
    }
    Ok(KernelMap { kernel, stride, transposed: true, input_len: input.len(), pairs, output: target.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ijk: &[[i32; 3]], level: u32) -> Arc<CoordSet> {
        Arc::new(CoordSet::with_batch_size(ijk.iter().map(|&c| Coord::new(0, c)).collect(), level, 1).unwrap())
    }

    #[test]
    fn isolated_voxel_only_center() {
        let km = build_kernel_map(&set(&[[4, 5, 6]], 0), 3, 1).unwrap();
        assert_eq!(km.output().len(), 1);
        for off in 0..27 {
            let expect = if off == 13 { 1 } else { 0 };
            assert_eq!(km.pairs(off).len(), expect, "offset {off}");
        }
    }

    #[test]
    fn adjacent_pair_enumeration() {
        let km = build_kernel_map(&set(&[[0, 0, 0], [1, 0, 0]], 0), 3, 1).unwrap();
        // (kz, kx, ky) = (1, 2, 1) looks at +x, (1, 0, 1) at -x.
        let plus_x = 9 + 2 * 3 + 1;
        let minus_x = 9 + 1;
        assert_eq!(km.pairs(13).len(), 2);
        assert_eq!(km.pairs(plus_x), &[(1, 0)]);
        assert_eq!(km.pairs(minus_x), &[(0, 1)]);
        let empty = (0..27).filter(|o| km.pairs(*o).is_empty()).count();
        assert_eq!(empty, 24);
    }

    #[test]
    fn strided_output_is_floor_divided() {
        let km = build_kernel_map(&set(&[[0, 0, 0], [1, 1, 1], [-1, 2, 3]], 0), 3, 2).unwrap();
        let out: Vec<[i32; 3]> = km.output().coords().iter().map(|c| c.ijk).collect();
        assert_eq!(out, vec![[-1, 1, 1], [0, 0, 0]]);
        assert_eq!(km.output().stride_level(), 1);
    }

    #[test]
    fn unsupported_combinations() {
        let s = set(&[[0, 0, 0]], 0);
        assert!(matches!(build_kernel_map(&s, 0, 1), Err(crate::Error::Unsupported(_))));
        assert!(matches!(build_kernel_map(&s, 3, 3), Err(crate::Error::Unsupported(_))));
        assert!(matches!(build_kernel_map(&s, 9, 1), Err(crate::Error::Unsupported(_))));
    }

    #[test]
    fn transposed_children_and_unreachable() {
        let coarse = set(&[[0, 0, 0]], 1);
        let mut kids = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    kids.push([x, y, z]);
                }
            }
        }
        let km = build_transposed_map(&coarse, &set(&kids, 0), 2, 2).unwrap();
        assert_eq!(km.total_pairs(), 8);
        assert!((0..8).all(|o| km.pairs(o).len() == 1));
        let far = set(&[[4, 0, 0]], 0);
        assert!(matches!(build_transposed_map(&coarse, &far, 2, 2), Err(crate::Error::Coordinate(_))));
        assert!(matches!(build_transposed_map(&coarse, &set(&[[0, 0, 0]], 1), 2, 2), Err(crate::Error::Coordinate(_))));
    }
}
