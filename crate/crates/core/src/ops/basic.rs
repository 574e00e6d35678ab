//! Pointwise, pooling and affine primitives.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::{Matrix, Tensor};

pub fn relu<S: Real>(x: &Matrix<S>) -> Matrix<S> {
    let data = x.data().iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect();
    Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

/// Gradient of ReLU given its output `y`.
pub(crate) fn relu_backward<S: Real>(y: &Matrix<S>, dy: &Matrix<S>) -> Matrix<S> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > S::zero() { g } else { S::zero() })
        .collect();
    Matrix::from_vec(y.rows(), y.cols(), data).expect("same shape")
}

pub fn add<S: Real>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        bail!(Shape, "add of {}x{} and {}x{}", a.rows(), a.cols(), b.rows(), b.cols());
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Channel concatenation `[a | b]` row by row.
pub fn concat<S: Real>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    if a.rows() != b.rows() {
        bail!(Shape, "concat of {} and {} rows", a.rows(), b.rows());
    }
    let cols = a.cols() + b.cols();
    let mut data = Vec::with_capacity(a.rows() * cols);
    for r in 0..a.rows() {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    Matrix::from_vec(a.rows(), cols, data)
}

pub(crate) fn split_cols<S: Real>(g: &Matrix<S>, left: usize) -> (Matrix<S>, Matrix<S>) {
    let right = g.cols() - left;
    let mut a = Vec::with_capacity(g.rows() * left);
    let mut b = Vec::with_capacity(g.rows() * right);
    for r in 0..g.rows() {
        let row = g.row(r);
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    (
        Matrix::from_vec(g.rows(), left, a).expect("shape"),
        Matrix::from_vec(g.rows(), right, b).expect("shape"),
    )
}

/// Mean of rows per group; `group[r]` names the output row of input row `r`.
pub fn group_mean<S: Real>(x: &Matrix<S>, group: &[u32], groups: usize) -> Result<Matrix<S>> {
    if group.len() != x.rows() {
        bail!(Shape, "{} group ids for {} rows", group.len(), x.rows());
    }
    let mut counts = vec![0usize; groups];
    let mut out = Matrix::zeros(groups, x.cols());
    for (r, &g) in group.iter().enumerate() {
        counts[g as usize] += 1;
        let src = x.row(r);
        for (o, &v) in out.row_mut(g as usize).iter_mut().zip(src) {
            *o += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        bail!(InvalidInput, "global pooling over an empty active set (sample {empty})");
    }
    for (g, &c) in counts.iter().enumerate() {
        let inv = S::one() / S::lit(c as f64);
        out.row_mut(g).iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

pub(crate) fn group_mean_backward<S: Real>(dy: &Matrix<S>, group: &[u32]) -> Matrix<S> {
    let mut counts = vec![0usize; dy.rows()];
    for &g in group {
        counts[g as usize] += 1;
    }
    let mut dx = Matrix::zeros(group.len(), dy.cols());
    for (r, &g) in group.iter().enumerate() {
        let inv = S::one() / S::lit(counts[g as usize] as f64);
        for (d, &v) in dx.row_mut(r).iter_mut().zip(dy.row(g as usize)) {
            *d = v * inv;
        }
    }
    dx
}

/// `y = x W^T + b` with `W` of shape `[out, in]`.
pub fn linear<S: Real>(x: &Matrix<S>, w: &Tensor<S>, b: Option<&[S]>) -> Result<Matrix<S>> {
    let d = w.dims();
    if d.len() != 2 || d[1] != x.cols() {
        bail!(Shape, "linear weight {d:?} vs input width {}", x.cols());
    }
    let (out_f, in_f) = (d[0], d[1]);
    if let Some(b) = b {
        if b.len() != out_f {
            bail!(Shape, "bias has {} entries, expected {out_f}", b.len());
        }
    }
    let mut y = Matrix::zeros(x.rows(), out_f);
    let wd = w.data();
    for r in 0..x.rows() {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for (o, yv) in yr.iter_mut().enumerate() {
            let wr = &wd[o * in_f..(o + 1) * in_f];
            let mut s = b.map_or(S::zero(), |b| b[o]);
            for (&a, &c) in xr.iter().zip(wr) {
                s += a * c;
            }
            *yv = s;
        }
    }
    Ok(y)
}

/// `(dx, dW, db)` of [`linear`].
pub(crate) fn linear_backward<S: Real>(x: &Matrix<S>, w: &Tensor<S>, dy: &Matrix<S>) -> (Matrix<S>, Vec<S>, Vec<S>) {
    let (out_f, in_f) = (w.dims()[0], w.dims()[1]);
    let wd = w.data();
    let mut dx = Matrix::zeros(x.rows(), in_f);
    let mut dw = vec![S::zero(); out_f * in_f];
    let mut db = vec![S::zero(); out_f];
    for r in 0..x.rows() {
        let g = dy.row(r);
        let xr = x.row(r);
        for (o, &gv) in g.iter().enumerate() {
            db[o] += gv;
            let wr = &wd[o * in_f..(o + 1) * in_f];
            let dwr = &mut dw[o * in_f..(o + 1) * in_f];
            for i in 0..in_f {
                dwr[i] += gv * xr[i];
            }
            let dxr = dx.row_mut(r);
            for i in 0..in_f {
                dxr[i] += gv * wr[i];
            }
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps() {
        let x = Matrix::from_vec(1, 3, vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn pooling_constant_field() {
        let x = Matrix::from_rows(&[vec![1.5f64, -2.0], vec![1.5, -2.0], vec![1.5, -2.0]]).unwrap();
        let y = group_mean(&x, &[0, 0, 0], 1).unwrap();
        assert_eq!(y.row(0), &[1.5, -2.0]);
        assert!(group_mean(&x, &[0, 0, 0], 2).is_err());
    }

    #[test]
    fn linear_identity() {
        let x = Matrix::from_vec(2, 2, vec![1.0f64, 2.0, -3.0, 4.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(linear(&x, &w, Some(&[0.0, 0.0])).unwrap(), x);
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let x = Matrix::from_vec(1, 3, vec![1.0f64, 2.0, 3.0]).unwrap();
        let w = Tensor::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        let g = Matrix::from_vec(1, 2, vec![0.5, -1.0]).unwrap();
        let (_, dw, db) = linear_backward(&x, &w, &g);
        assert_eq!(dw, vec![0.5, 1.0, 1.5, -1.0, -2.0, -3.0]);
        assert_eq!(db, vec![0.5, -1.0]);
    }
}
