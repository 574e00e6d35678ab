use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Matrix;

/// Target value excluded from the loss and from metrics.
pub const IGNORE_LABEL: u32 = u32::MAX;

/// Mean softmax cross-entropy over rows whose target is not
/// [`IGNORE_LABEL`], and its gradient with respect to the logits.
pub fn cross_entropy<S: Real>(logits: &Matrix<S>, targets: &[u32]) -> Result<(f64, Matrix<S>)> {
    if targets.len() != logits.rows() {
        bail!(Shape, "{} targets for {} logit rows", targets.len(), logits.rows());
    }
    let c = logits.cols();
    if let Some(t) = targets.iter().find(|&&t| t != IGNORE_LABEL && t as usize >= c) {
        bail!(InvalidInput, "class id {t} out of range for {c} classes");
    }
    let counted = targets.iter().filter(|&&t| t != IGNORE_LABEL).count();
    let mut grad = Matrix::zeros(logits.rows(), c);
    if counted == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / counted as f64;
    let mut total = 0.0;
    let mut probs: Vec<f64> = Vec::with_capacity(c);
    for (r, &t) in targets.iter().enumerate() {
        if t == IGNORE_LABEL {
            continue;
        }
        let row = logits.row(r);
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        probs.clear();
        probs.extend(row.iter().map(|v| Float::exp(v.as_f64() - max)));
        let z: f64 = probs.iter().sum();
        total += Float::ln(z) + max - row[t as usize].as_f64();
        let g = grad.row_mut(r);
        for (j, p) in probs.iter().enumerate() {
            let y = if j == t as usize { 1.0 } else { 0.0 };
            g[j] = S::lit((p / z - y) * inv);
        }
    }
    if !total.is_finite() {
        bail!(Numeric, "cross-entropy is not finite");
    }
    Ok((total * inv, grad))
}

/// Row-wise argmax (first maximum wins).
pub fn argmax_rows<S: Real>(logits: &Matrix<S>) -> Vec<u32> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn uniform_logits_give_ln_c() {
        let l = Matrix::<f64>::zeros(3, 4);
        let (loss, _) = cross_entropy(&l, &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn margin_drives_loss_down() {
        let mut prev = f64::INFINITY;
        for m in [1.0, 5.0, 10.0] {
            let l = Matrix::from_vec(1, 2, vec![m, 0.0f64]).unwrap();
            let (loss, _) = cross_entropy(&l, &[0]).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn ignored_rows_do_not_count() {
        let l = Matrix::from_vec(2, 2, vec![3.0f64, -1.0, 0.0, 0.0]).unwrap();
        let (a, g) = cross_entropy(&l, &[IGNORE_LABEL, 1]).unwrap();
        assert!((a - 2f64.ln()).abs() < 1e-12);
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert!(cross_entropy(&l, &[2, 0]).is_err());
    }
}
