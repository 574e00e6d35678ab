//! Brute-force references in double precision.
//!
//! Nothing here touches `ops`, `kernel_map` or `inflation`: every result is
//! a direct summation over dense arrays, so agreement with the production
//! paths is evidence rather than tautology.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::grid::{DenseGrid, Image};
use crate::tensor::Tensor;

/// Per-axis `(z, x, y)` view of a grid: sizes and origins.
fn zxy(g: &DenseGrid<f64>) -> ([usize; 3], [i64; 3]) {
    let o = g.origin();
    (g.shape(), [o[2] as i64, o[0] as i64, o[1] as i64])
}

fn weights5(w: &Tensor<f64>) -> Result<(usize, usize, usize)> {
    let d = w.dims();
    if d.len() != 5 || d[2] != d[3] || d[3] != d[4] {
        bail!(Shape, "3D weights must be [M, N, K, K, K], got {d:?}");
    }
    Ok((d[0], d[1], d[2]))
}

#[inline]
fn w5(w: &[f64], n: usize, k: usize, m: usize, ni: usize, kz: usize, kx: usize, ky: usize) -> f64 {
    w[(((m * n + ni) * k + kz) * k + kx) * k + ky]
}

/// Zero-padded (`K / 2`) strided cross-correlation. The output grid covers
/// every output site any input cell reaches, in absolute coordinates
/// (output site `o` reads input `s*o + tap - pad`).
pub fn dense_conv3d_ref(x: &DenseGrid<f64>, w: &Tensor<f64>, stride: usize) -> Result<DenseGrid<f64>> {
    let (m, n, k) = weights5(w)?;
    if x.channels() != n {
        bail!(Shape, "grid has {} channels, weights expect {n}", x.channels());
    }
    if stride == 0 {
        bail!(InvalidInput, "stride must be positive");
    }
    let (shape, org) = zxy(x);
    let (s, pad, kk) = (stride as i64, (k / 2) as i64, k as i64);
    let mut lo = [0i64; 3];
    let mut size = [0usize; 3];
    for a in 0..3 {
        let first = (org[a] - (kk - 1) + pad).div_euclid(s) - 1;
        let last = (org[a] + shape[a] as i64 - 1 + pad).div_euclid(s) + 1;
        lo[a] = first;
        size[a] = (last - first + 1) as usize;
    }
    let mut out = DenseGrid::zeros(m, size, [lo[1] as i32, lo[2] as i32, lo[0] as i32]);
    let wd = w.data();
    for mi in 0..m {
        for oz in 0..size[0] {
            for ox in 0..size[1] {
                for oy in 0..size[2] {
                    let o = [lo[0] + oz as i64, lo[1] + ox as i64, lo[2] + oy as i64];
                    let mut acc = 0.0;
                    for kz in 0..k {
                        for kx in 0..k {
                            for ky in 0..k {
                                let t = [kz as i64, kx as i64, ky as i64];
                                let mut idx = [0usize; 3];
                                let mut inside = true;
                                for a in 0..3 {
                                    let c = s * o[a] + t[a] - pad - org[a];
                                    if c < 0 || c >= shape[a] as i64 {
                                        inside = false;
                                        break;
                                    }
                                    idx[a] = c as usize;
                                }
                                if !inside {
                                    continue;
                                }
                                for ni in 0..n {
                                    acc += w5(wd, n, k, mi, ni, kz, kx, ky) * x.get(ni, idx[0], idx[1], idx[2]);
                                }
                            }
                        }
                    }
                    out.set(mi, oz, ox, oy, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Transposed convolution without padding: input cell `i` scatters
/// `W[:, :, tap] . x(i)` to output `s*i + tap`.
pub fn dense_deconv_ref(x: &DenseGrid<f64>, w: &Tensor<f64>, stride: usize) -> Result<DenseGrid<f64>> {
    let (m, n, k) = weights5(w)?;
    if x.channels() != n {
        bail!(Shape, "grid has {} channels, weights expect {n}", x.channels());
    }
    let (shape, org) = zxy(x);
    let s = stride as i64;
    let size = shape.map(|d| if d == 0 { 0 } else { stride * (d - 1) + k });
    let lo = org.map(|o| s * o);
    let mut out = DenseGrid::zeros(m, size, [lo[1] as i32, lo[2] as i32, lo[0] as i32]);
    let wd = w.data();
    for iz in 0..shape[0] {
        for ix in 0..shape[1] {
            for iy in 0..shape[2] {
                for kz in 0..k {
                    for kx in 0..k {
                        for ky in 0..k {
                            let (oz, ox, oy) = (stride * iz + kz, stride * ix + kx, stride * iy + ky);
                            for mi in 0..m {
                                let mut acc = out.get(mi, oz, ox, oy);
                                for ni in 0..n {
                                    acc += w5(wd, n, k, mi, ni, kz, kx, ky) * x.get(ni, iz, ix, iy);
                                }
                                out.set(mi, oz, ox, oy, acc);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Zero-padded 2D cross-correlation, `H' = (H + 2*pad - K) / s + 1`.
pub fn dense_conv2d_ref(x: &Image<f64>, w: &Tensor<f64>, stride: usize) -> Result<Image<f64>> {
    let d = w.dims();
    if d.len() != 4 || d[2] != d[3] {
        bail!(Shape, "2D weights must be [M, N, K, K], got {d:?}");
    }
    let (m, n, k) = (d[0], d[1], d[2]);
    if x.channels != n {
        bail!(Shape, "image has {} channels, weights expect {n}", x.channels);
    }
    if stride == 0 {
        bail!(InvalidInput, "stride must be positive");
    }
    let pad = k / 2;
    if x.height + 2 * pad < k || x.width + 2 * pad < k {
        bail!(Shape, "image smaller than kernel");
    }
    let oh = (x.height + 2 * pad - k) / stride + 1;
    let ow = (x.width + 2 * pad - k) / stride + 1;
    let mut out = Image::zeros(m, oh, ow);
    let wd = w.data();
    for mi in 0..m {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0;
                for ni in 0..n {
                    for kx in 0..k {
                        for ky in 0..k {
                            let h = (i * stride + kx) as i64 - pad as i64;
                            let v = (j * stride + ky) as i64 - pad as i64;
                            if h < 0 || v < 0 || h >= x.height as i64 || v >= x.width as i64 {
                                continue;
                            }
                            acc += wd[((mi * n + ni) * k + kx) * k + ky] * x.get(ni, h as usize, v as usize);
                        }
                    }
                }
                out.set(mi, i, j, acc);
            }
        }
    }
    Ok(out)
}

/// `W3d[m, n, kz, kx, ky] = W2d[m, n, kx, ky]` by explicit replication.
pub fn replicate_along_z(w2d: &Tensor<f64>) -> Result<Tensor<f64>> {
    let d = w2d.dims();
    if d.len() != 4 || d[2] != d[3] {
        bail!(Shape, "2D weights must be [M, N, K, K], got {d:?}");
    }
    let (m, n, k) = (d[0], d[1], d[2]);
    let mut out = vec![0.0; m * n * k * k * k];
    for mi in 0..m {
        for ni in 0..n {
            for kz in 0..k {
                for kx in 0..k {
                    for ky in 0..k {
                        out[(((mi * n + ni) * k + kz) * k + kx) * k + ky] = w2d.data()[((mi * n + ni) * k + kx) * k + ky];
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[m, n, k, k, k], out)
}

/// Windowed depth sum `S_z = sum_kz X[z + kz - pad]` (zero outside) as an
/// image over `(x, y)`.
pub fn windowed_depth_sum(x: &DenseGrid<f64>, k: usize, z: usize) -> Image<f64> {
    let [d, h, w] = x.shape();
    let pad = (k / 2) as i64;
    let mut img = Image::zeros(x.channels(), h, w);
    for c in 0..x.channels() {
        for kz in 0..k {
            let zz = z as i64 + kz as i64 - pad;
            if zz < 0 || zz >= d as i64 {
                continue;
            }
            for i in 0..h {
                for j in 0..w {
                    let v = img.get(c, i, j) + x.get(c, zz as usize, i, j);
                    img.set(c, i, j, v);
                }
            }
        }
    }
    img
}

/// Max `|A_z - B_z|` between the stride-1 3D convolution of `x` by `w3d`
/// and the 2D convolution by `w2d` of each windowed depth sum, over the
/// `D x H x W` sites of `x`.
pub fn projection_deviation(w2d: &Tensor<f64>, w3d: &Tensor<f64>, x: &DenseGrid<f64>) -> Result<f64> {
    let k = w2d.dims().get(2).copied().unwrap_or(0);
    if k % 2 == 0 {
        bail!(Shape, "projection check needs an odd kernel");
    }
    let a = dense_conv3d_ref(x, w3d, 1)?;
    let [d, h, w] = x.shape();
    let off = [x.origin()[2] - a.origin()[2], x.origin()[0] - a.origin()[0], x.origin()[1] - a.origin()[1]].map(|v| v as usize);
    let mut dev = 0.0f64;
    for z in 0..d {
        let b = dense_conv2d_ref(&windowed_depth_sum(x, k, z), w2d, 1)?;
        for c in 0..b.channels {
            for i in 0..h {
                for j in 0..w {
                    let av = a.get(c, z + off[0], i + off[1], j + off[2]);
                    dev = dev.max((av - b.get(c, i, j)).abs());
                }
            }
        }
    }
    Ok(dev)
}

/// [`projection_deviation`] for the default z-replicating inflation.
pub fn projection_equivalence_check(w2d: &Tensor<f64>, x: &DenseGrid<f64>) -> Result<f64> {
    projection_deviation(w2d, &replicate_along_z(w2d)?, x)
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h`.
pub fn finite_diff<F>(mut f: F, p: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut q = p.to_vec();
    let mut g = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        q[i] = p[i] + h;
        let fp = f(&q)?;
        q[i] = p[i] - h;
        let fm = f(&q)?;
        q[i] = p[i];
        if !(fp.is_finite() && fm.is_finite()) {
            bail!(Numeric, "objective is not finite around coordinate {i}");
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

pub const DEFAULT_STEP: f64 = 1e-5;

/// Normwise relative error `max|a - b| / max(max|a|, max|b|)`; zero when both
/// vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_identity() {
        let x = DenseGrid::from_values(1, [2, 2, 2], [0; 3], (1..=8).map(f64::from).collect()).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1, 1], vec![1.0]).unwrap();
        let y = dense_conv3d_ref(&x, &w, 1).unwrap();
        for z in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let o = y.origin();
                    let (dz, di, dj) = ((0 - o[2]) as usize, (0 - o[0]) as usize, (0 - o[1]) as usize);
                    assert_eq!(y.get(0, z + dz, i + di, j + dj), x.get(0, z, i, j));
                }
            }
        }
    }

    #[test]
    fn impulse_response_covers_27_cells() {
        let mut x = DenseGrid::zeros(1, [5, 5, 5], [0; 3]);
        x.set(0, 2, 2, 2, 1.0);
        let w = Tensor::filled(&[1, 1, 3, 3, 3], 1.0);
        let y = dense_conv3d_ref(&x, &w, 1).unwrap();
        assert_eq!(y.values().iter().filter(|&&v| v == 1.0).count(), 27);
        assert!(y.values().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn finite_diff_of_half_square_norm() {
        let p = [0.3, -1.2, 2.5];
        let g = finite_diff(|q| Ok(q.iter().map(|v| v * v).sum::<f64>() / 2.0), &p, DEFAULT_STEP).unwrap();
        assert!(relative_error(&g, &p) <= 1e-9);
    }

    #[test]
    fn finite_diff_rejects_nan() {
        assert!(matches!(finite_diff(|_| Ok(f64::NAN), &[1.0], 1e-5), Err(crate::Error::Numeric(_))));
    }

    #[test]
    fn degenerate_depth_projection() {
        let x = DenseGrid::from_values(1, [1, 4, 4], [0; 3], (0..16).map(|v| v as f64 * 0.1).collect()).unwrap();
        let w2d = Tensor::from_vec(&[1, 1, 3, 3], (0..9).map(|v| v as f64 - 4.0).collect()).unwrap();
        assert!(projection_equivalence_check(&w2d, &x).unwrap() <= 1e-12);
    }
}
