//! Batch normalization over feature rows (per channel, across all active
//! rows of the composed batch).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Matrix;

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize by batch statistics.
    Train,
    /// Normalize by running statistics.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<S> {
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub momentum: f64,
    pub eps: f64,
}

impl<S: Real> BatchNormParams<S> {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![S::one(); channels],
            beta: vec![S::zero(); channels],
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        if self.beta.len() != c || self.running_mean.len() != c || self.running_var.len() != c {
            bail!(Shape, "batch norm vectors disagree on channel width");
        }
        if self.running_var.iter().any(|v| *v < S::zero()) {
            bail!(InvalidInput, "running variance must be nonnegative");
        }
        if !(self.momentum > 0.0 && self.momentum <= 1.0) || !(self.eps > 0.0) {
            bail!(InvalidInput, "momentum must be in (0, 1] and eps positive");
        }
        Ok(())
    }
}

/// What backward needs from a forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct BnSaved<S> {
    pub xhat: Matrix<S>,
    pub inv_std: Vec<S>,
    pub mode: BnMode,
}

/// Normalizes `x` and returns `(y, saved)`. In train mode with
/// `stats_update`, running statistics move by `momentum` toward the batch
/// statistics (unbiased variance for the running estimate).
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_forward_raw<S: Real>(
    x: &Matrix<S>,
    gamma: &[S],
    beta: &[S],
    running_mean: &mut [S],
    running_var: &mut [S],
    momentum: f64,
    eps: f64,
    mode: BnMode,
    stats_update: bool,
) -> Result<(Matrix<S>, BnSaved<S>)> {
    let c = x.cols();
    if gamma.len() != c || beta.len() != c || running_mean.len() != c || running_var.len() != c {
        bail!(Shape, "batch norm has {} channels, input has {c}", gamma.len());
    }
    let rows = x.rows();
    let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
        BnMode::Train => {
            if rows == 0 {
                bail!(InvalidInput, "train-mode batch norm needs at least one row");
            }
            let mut mean = vec![0f64; c];
            for r in 0..rows {
                for (m, v) in mean.iter_mut().zip(x.row(r)) {
                    *m += v.as_f64();
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0f64; c];
            for r in 0..rows {
                for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                    let d = v.as_f64() - m;
                    *s += d * d;
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            if stats_update {
                let unbias = if rows > 1 { rows as f64 / (rows - 1) as f64 } else { 1.0 };
                for ch in 0..c {
                    let rm = running_mean[ch].as_f64();
                    let rv = running_var[ch].as_f64();
                    running_mean[ch] = S::lit((1.0 - momentum) * rm + momentum * mean[ch]);
                    running_var[ch] = S::lit((1.0 - momentum) * rv + momentum * var[ch] * unbias);
                }
            }
            (mean, var)
        }
        BnMode::Eval => (
            running_mean.iter().map(|v| v.as_f64()).collect(),
            running_var.iter().map(|v| v.as_f64()).collect(),
        ),
    };
    let inv_std: Vec<S> = var.iter().map(|v| S::lit(1.0 / libm_sqrt(v + eps))).collect();
    let mean: Vec<S> = mean.into_iter().map(S::lit).collect();
    let mut xhat = Matrix::zeros(rows, c);
    let mut y = Matrix::zeros(rows, c);
    for r in 0..rows {
        let xr = x.row(r);
        let hr = xhat.row_mut(r);
        for ch in 0..c {
            hr[ch] = (xr[ch] - mean[ch]) * inv_std[ch];
        }
        let yr = y.row_mut(r);
        for ch in 0..c {
            yr[ch] = gamma[ch] * xhat.get(r, ch) + beta[ch];
        }
    }
    Ok((y, BnSaved { xhat, inv_std, mode }))
}

#[inline]
fn libm_sqrt(v: f64) -> f64 {
    num_traits::Float::sqrt(v)
}

/// `(dL/dx, dL/dgamma, dL/dbeta)`.
pub(crate) fn bn_backward_raw<S: Real>(dy: &Matrix<S>, gamma: &[S], saved: &BnSaved<S>) -> (Matrix<S>, Vec<S>, Vec<S>) {
    let (rows, c) = (dy.rows(), dy.cols());
    let mut dgamma = vec![S::zero(); c];
    let mut dbeta = vec![S::zero(); c];
    for r in 0..rows {
        for ch in 0..c {
            let g = dy.get(r, ch);
            dgamma[ch] += g * saved.xhat.get(r, ch);
            dbeta[ch] += g;
        }
    }
    let mut dx = Matrix::zeros(rows, c);
    match saved.mode {
        BnMode::Eval => {
            for r in 0..rows {
                for ch in 0..c {
                    dx.set(r, ch, dy.get(r, ch) * gamma[ch] * saved.inv_std[ch]);
                }
            }
        }
        BnMode::Train => {
            // dx = inv_std / n * (n * dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
            let n = S::lit(rows as f64);
            for ch in 0..c {
                let s1 = gamma[ch] * dbeta[ch];
                let s2 = gamma[ch] * dgamma[ch];
                let k = saved.inv_std[ch] / n;
                for r in 0..rows {
                    let dxhat = dy.get(r, ch) * gamma[ch];
                    dx.set(r, ch, k * (n * dxhat - s1 - saved.xhat.get(r, ch) * s2));
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub fn batchnorm_forward<S: Real>(x: &Matrix<S>, p: &mut BatchNormParams<S>, mode: BnMode, stats_update: bool) -> Result<Matrix<S>> {
    p.validate()?;
    let (y, _) = bn_forward_raw(
        x,
        &p.gamma,
        &p.beta,
        &mut p.running_mean,
        &mut p.running_var,
        p.momentum,
        p.eps,
        mode,
        stats_update,
    )?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_identity() {
        let x = Matrix::from_vec(3, 2, vec![1.0f64, -2.0, 0.5, 3.0, 7.0, 0.0]).unwrap();
        let mut p = BatchNormParams::identity(2);
        let y = batchnorm_forward(&x, &mut p, BnMode::Eval, false).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn two_point_standardization() {
        let x = Matrix::from_vec(2, 1, vec![1.0f32, 3.0]).unwrap();
        let mut p = BatchNormParams::identity(1);
        let y = batchnorm_forward(&x, &mut p, BnMode::Train, true).unwrap();
        assert!((y.get(0, 0) + 1.0).abs() < 1e-4);
        assert!((y.get(1, 0) - 1.0).abs() < 1e-4);
        // running: 0.9 * 0 + 0.1 * 2 and 0.9 * 1 + 0.1 * 2 (unbiased var of {1, 3})
        assert!((p.running_mean[0] - 0.2).abs() < 1e-6);
        assert!((p.running_var[0] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn frozen_stats_stay_put() {
        let x = Matrix::from_vec(2, 1, vec![1.0f32, 3.0]).unwrap();
        let mut p = BatchNormParams::identity(1);
        batchnorm_forward(&x, &mut p, BnMode::Train, false).unwrap();
        assert_eq!(p.running_mean, vec![0.0]);
        assert_eq!(p.running_var, vec![1.0]);
    }

    #[test]
    fn empty_train_batch_rejected() {
        let x = Matrix::<f32>::zeros(0, 3);
        let mut p = BatchNormParams::identity(3);
        assert!(matches!(batchnorm_forward(&x, &mut p, BnMode::Train, true), Err(crate::Error::InvalidInput(_))));
    }
}
