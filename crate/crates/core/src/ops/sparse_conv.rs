//! Gather-multiply-scatter sparse 3D convolution and its transpose.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::kernel_map::{build_transposed_map, KernelMap};
use crate::real::Real;
use crate::tensor::{Matrix, Tensor};
use crate::voxel::{CoordSet, SparseVoxelTensor};

/// `[M, N, K, K, K]` weights with a stride; padding is `K / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams3D<S> {
    weights: Tensor<S>,
    stride: usize,
}

impl<S: Real> ConvParams3D<S> {
    pub fn new(weights: Tensor<S>, stride: usize) -> Result<Self> {
        let d = weights.dims();
        if d.len() != 5 || d[2] != d[3] || d[3] != d[4] || d.contains(&0) {
            bail!(Shape, "3D conv weights must be [M, N, K, K, K], got {d:?}");
        }
        if stride == 0 {
            bail!(InvalidInput, "stride must be positive");
        }
        if !weights.is_finite() {
            bail!(InvalidInput, "conv weights must be finite");
        }
        Ok(Self { weights, stride })
    }

    #[inline]
    pub fn weights(&self) -> &Tensor<S> {
        &self.weights
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }

    #[inline]
    pub fn kernel(&self) -> usize {
        self.weights.dims()[2]
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.stride
    }
}

/// Reorders `[M, N, V]` weights into per-offset `[V][N][M]` blocks.
pub(crate) fn offset_major<S: Real>(w: &[S], m: usize, n: usize, volume: usize) -> Vec<S> {
    let mut out = vec![S::zero(); w.len()];
    for mi in 0..m {
        for ni in 0..n {
            let src = &w[(mi * n + ni) * volume..(mi * n + ni + 1) * volume];
            for (v, &x) in src.iter().enumerate() {
                out[(v * n + ni) * m + mi] = x;
            }
        }
    }
    out
}

fn channel_major<S: Real>(wt: &[S], m: usize, n: usize, volume: usize) -> Vec<S> {
    let mut out = vec![S::zero(); wt.len()];
    for v in 0..volume {
        for ni in 0..n {
            for mi in 0..m {
                out[(mi * n + ni) * volume + v] = wt[(v * n + ni) * m + mi];
            }
        }
    }
    out
}

/// `out[o] += W[:, :, offset] . x[i]` over every map pair, visited in
/// `(offset, output_row)` order.
pub(crate) fn gather_scatter<S: Real>(x: &Matrix<S>, w: &[S], out_ch: usize, km: &KernelMap) -> Matrix<S> {
    let n = x.cols();
    let volume = km.volume();
    let wt = offset_major(w, out_ch, n, volume);
    let mut out = Matrix::zeros(km.output().len(), out_ch);
    for offset in 0..volume {
        let block = &wt[offset * n * out_ch..(offset + 1) * n * out_ch];
        for &(i, o) in km.pairs(offset) {
            let xr = x.row(i as usize);
            let orow = out.row_mut(o as usize);
            for (ni, &xv) in xr.iter().enumerate() {
                let wrow = &block[ni * out_ch..(ni + 1) * out_ch];
                for (acc, &wv) in orow.iter_mut().zip(wrow) {
                    *acc += xv * wv;
                }
            }
        }
    }
    out
}

/// Gradients of [`gather_scatter`]: `(dL/dx, dL/dW)` with `dL/dW` in
/// `[M, N, V]` layout. Either side can be skipped.
pub(crate) fn gather_scatter_backward<S: Real>(
    x: &Matrix<S>,
    w: &[S],
    out_ch: usize,
    km: &KernelMap,
    dy: &Matrix<S>,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Matrix<S>>, Option<Vec<S>>) {
    let n = x.cols();
    let volume = km.volume();
    let wt = offset_major(w, out_ch, n, volume);
    let mut dx = want_dx.then(|| Matrix::zeros(x.rows(), n));
    let mut dwt = want_dw.then(|| vec![S::zero(); w.len()]);
    for offset in 0..volume {
        let base = offset * n * out_ch;
        for &(i, o) in km.pairs(offset) {
            let g = dy.row(o as usize);
            if let Some(dx) = dx.as_mut() {
                let dxr = dx.row_mut(i as usize);
                for (ni, d) in dxr.iter_mut().enumerate() {
                    let wrow = &wt[base + ni * out_ch..base + (ni + 1) * out_ch];
                    let mut s = S::zero();
                    for (&gv, &wv) in g.iter().zip(wrow) {
                        s += gv * wv;
                    }
                    *d += s;
                }
            }
            if let Some(dwt) = dwt.as_mut() {
                let xr = x.row(i as usize);
                for (ni, &xv) in xr.iter().enumerate() {
                    let drow = &mut dwt[base + ni * out_ch..base + (ni + 1) * out_ch];
                    for (dv, &gv) in drow.iter_mut().zip(g) {
                        *dv += xv * gv;
                    }
                }
            }
        }
    }
    (dx, dwt.map(|d| channel_major(&d, out_ch, n, volume)))
}

fn check_map<S: Real>(x: &SparseVoxelTensor<S>, p: &ConvParams3D<S>, km: &KernelMap) -> Result<()> {
    if x.channels() != p.in_channels() {
        bail!(Shape, "input has {} channels, weights expect {}", x.channels(), p.in_channels());
    }
    if km.input_len() != x.len() || km.kernel() != p.kernel() || km.stride() != p.stride() {
        bail!(
            Shape,
            "kernel map (K={}, stride={}, {} inputs) does not match conv (K={}, stride={}, {} inputs)",
            km.kernel(),
            km.stride(),
            km.input_len(),
            p.kernel(),
            p.stride(),
            x.len()
        );
    }
    Ok(())
}

/// Sparse convolution over a prebuilt kernel map. Empty sites contribute
/// nothing, which equals zero-filling them.
pub fn sparse_conv3d_forward<S: Real>(x: &SparseVoxelTensor<S>, p: &ConvParams3D<S>, km: &KernelMap) -> Result<SparseVoxelTensor<S>> {
    check_map(x, p, km)?;
    if km.is_transposed() {
        bail!(Shape, "transposed kernel map passed to a forward convolution");
    }
    let feats = gather_scatter(x.feats(), p.weights().data(), p.out_channels(), km);
    SparseVoxelTensor::new(km.output().clone(), feats, x.voxel_size() * km.stride() as f64)
}

/// `(dL/dx, dL/dW)` of [`sparse_conv3d_forward`], also valid for transposed maps.
pub fn sparse_conv3d_backward<S: Real>(
    x: &SparseVoxelTensor<S>,
    p: &ConvParams3D<S>,
    km: &KernelMap,
    dy: &Matrix<S>,
) -> Result<(Matrix<S>, Tensor<S>)> {
    check_map(x, p, km)?;
    if dy.rows() != km.output().len() || dy.cols() != p.out_channels() {
        bail!(Shape, "upstream gradient is {}x{}, expected {}x{}", dy.rows(), dy.cols(), km.output().len(), p.out_channels());
    }
    let (dx, dw) = gather_scatter_backward(x.feats(), p.weights().data(), p.out_channels(), km, dy, true, true);
    Ok((dx.unwrap_or_else(|| Matrix::zeros(0, 0)), Tensor::from_vec(p.weights().dims(), dw.unwrap_or_default())?))
}

/// Transposed convolution onto `target`, the cached active set of the
/// encoder stage this decoder stage pairs with.
pub fn sparse_deconv_forward<S: Real>(
    x: &SparseVoxelTensor<S>,
    p: &ConvParams3D<S>,
    target: &Arc<CoordSet>,
) -> Result<SparseVoxelTensor<S>> {
    if x.channels() != p.in_channels() {
        bail!(Shape, "input has {} channels, weights expect {}", x.channels(), p.in_channels());
    }
    let km = build_transposed_map(x.coords(), target, p.kernel(), p.stride())?;
    let feats = gather_scatter(x.feats(), p.weights().data(), p.out_channels(), &km);
    SparseVoxelTensor::new(target.clone(), feats, x.voxel_size() / p.stride() as f64)
}
