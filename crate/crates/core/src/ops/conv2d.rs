//! Dense 2D convolution on NHWC row matrices (rows = pixels, cols = channels).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::grid::Image;
use crate::real::Real;
use crate::tensor::{Matrix, Tensor};

/// `[M, N, K, K]` weights; padding `K / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams2D<S> {
    weights: Tensor<S>,
    stride: usize,
}

impl<S: Real> ConvParams2D<S> {
    pub fn new(weights: Tensor<S>, stride: usize) -> Result<Self> {
        let d = weights.dims();
        if d.len() != 4 || d[2] != d[3] || d.contains(&0) {
            bail!(Shape, "2D conv weights must be [M, N, K, K], got {d:?}");
        }
        if d[2].is_multiple_of(2) {
            bail!(Unsupported, "even 2D kernel {}", d[2]);
        }
        if !(stride == 1 || stride == 2) {
            bail!(Unsupported, "2D stride {stride}");
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
    pub fn stride(&self) -> usize {
        self.stride
    }
}

/// Batch and spatial extent of an NHWC activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanarShape {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl PlanarShape {
    #[inline]
    pub fn pixels(&self) -> usize {
        self.batch * self.height * self.width
    }

    pub fn conv_output(&self, kernel: usize, stride: usize) -> PlanarShape {
        let pad = kernel / 2;
        PlanarShape {
            batch: self.batch,
            height: (self.height + 2 * pad - kernel) / stride + 1,
            width: (self.width + 2 * pad - kernel) / stride + 1,
        }
    }
}

/// Per-tap `[K*K][N][M]` blocks of `[M, N, K, K]` weights.
fn tap_major<S: Real>(w: &[S], m: usize, n: usize, taps: usize) -> Vec<S> {
    crate::ops::sparse_conv::offset_major(w, m, n, taps)
}

pub(crate) fn conv2d_nhwc<S: Real>(
    x: &Matrix<S>,
    shape: PlanarShape,
    w: &[S],
    out_ch: usize,
    kernel: usize,
    stride: usize,
) -> (Matrix<S>, PlanarShape) {
    let n = x.cols();
    let os = shape.conv_output(kernel, stride);
    let pad = (kernel / 2) as isize;
    let wt = tap_major(w, out_ch, n, kernel * kernel);
    let mut out = Matrix::zeros(os.pixels(), out_ch);
    for b in 0..shape.batch {
        for oh in 0..os.height {
            for ow in 0..os.width {
                let orow_idx = (b * os.height + oh) * os.width + ow;
                for kx in 0..kernel {
                    let ih = (oh * stride) as isize + kx as isize - pad;
                    if ih < 0 || ih >= shape.height as isize {
                        continue;
                    }
                    for ky in 0..kernel {
                        let iw = (ow * stride) as isize + ky as isize - pad;
                        if iw < 0 || iw >= shape.width as isize {
                            continue;
                        }
                        let irow = (b * shape.height + ih as usize) * shape.width + iw as usize;
                        let tap = kx * kernel + ky;
                        let block = &wt[tap * n * out_ch..(tap + 1) * n * out_ch];
                        let xr = x.row(irow);
                        let orow = out.row_mut(orow_idx);
                        for (ni, &xv) in xr.iter().enumerate() {
                            for (acc, &wv) in orow.iter_mut().zip(&block[ni * out_ch..(ni + 1) * out_ch]) {
                                *acc += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    (out, os)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_nhwc_backward<S: Real>(
    x: &Matrix<S>,
    shape: PlanarShape,
    w: &[S],
    out_ch: usize,
    kernel: usize,
    stride: usize,
    dy: &Matrix<S>,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Matrix<S>>, Option<Vec<S>>) {
    let n = x.cols();
    let os = shape.conv_output(kernel, stride);
    let pad = (kernel / 2) as isize;
    let taps = kernel * kernel;
    let wt = tap_major(w, out_ch, n, taps);
    let mut dx = want_dx.then(|| Matrix::zeros(x.rows(), n));
    let mut dwt = want_dw.then(|| vec![S::zero(); w.len()]);
    for b in 0..shape.batch {
        for oh in 0..os.height {
            for ow in 0..os.width {
                let g = dy.row((b * os.height + oh) * os.width + ow);
                for kx in 0..kernel {
                    let ih = (oh * stride) as isize + kx as isize - pad;
                    if ih < 0 || ih >= shape.height as isize {
                        continue;
                    }
                    for ky in 0..kernel {
                        let iw = (ow * stride) as isize + ky as isize - pad;
                        if iw < 0 || iw >= shape.width as isize {
                            continue;
                        }
                        let irow = (b * shape.height + ih as usize) * shape.width + iw as usize;
                        let base = (kx * kernel + ky) * n * out_ch;
                        if let Some(dx) = dx.as_mut() {
                            for (ni, d) in dx.row_mut(irow).iter_mut().enumerate() {
                                let wrow = &wt[base + ni * out_ch..base + (ni + 1) * out_ch];
                                let mut s = S::zero();
                                for (&gv, &wv) in g.iter().zip(wrow) {
                                    s += gv * wv;
                                }
                                *d += s;
                            }
                        }
                        if let Some(dwt) = dwt.as_mut() {
                            for (ni, &xv) in x.row(irow).iter().enumerate() {
                                let drow = &mut dwt[base + ni * out_ch..base + (ni + 1) * out_ch];
                                for (dv, &gv) in drow.iter_mut().zip(g) {
                                    *dv += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let dw = dwt.map(|d| {
        let mut out = vec![S::zero(); d.len()];
        for t in 0..taps {
            for ni in 0..n {
                for mi in 0..out_ch {
                    out[(mi * n + ni) * taps + t] = d[(t * n + ni) * out_ch + mi];
                }
            }
        }
        out
    });
    (dx, dw)
}

/// `[C, H, W]` image to a single-sample NHWC matrix.
pub fn image_to_rows<S: Real>(x: &Image<S>) -> (Matrix<S>, PlanarShape) {
    let mut m = Matrix::zeros(x.height * x.width, x.channels);
    for c in 0..x.channels {
        for h in 0..x.height {
            for w in 0..x.width {
                m.set(h * x.width + w, c, x.get(c, h, w));
            }
        }
    }
    (m, PlanarShape { batch: 1, height: x.height, width: x.width })
}

/// Inverse of [`image_to_rows`] for batch entry `b`.
pub fn rows_to_image<S: Real>(m: &Matrix<S>, shape: PlanarShape, b: usize) -> Image<S> {
    let mut img = Image::zeros(m.cols(), shape.height, shape.width);
    for h in 0..shape.height {
        for w in 0..shape.width {
            let row = m.row((b * shape.height + h) * shape.width + w);
            for (c, &v) in row.iter().enumerate() {
                img.set(c, h, w, v);
            }
        }
    }
    img
}

/// Zero-padded cross-correlation of a `[N, H, W]` image.
pub fn dense_conv2d_forward<S: Real>(x: &Image<S>, p: &ConvParams2D<S>) -> Result<Image<S>> {
    let d = p.weights().dims();
    if x.channels != d[1] {
        bail!(Shape, "image has {} channels, weights expect {}", x.channels, d[1]);
    }
    let (rows, shape) = image_to_rows(x);
    let (out, os) = conv2d_nhwc(&rows, shape, p.weights().data(), d[0], d[2], p.stride());
    Ok(rows_to_image(&out, os, 0))
}
