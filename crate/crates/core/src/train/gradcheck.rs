use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::synth::sample_rng;
use crate::error::{bail, Result};
use crate::models::{NetInput, NetworkGraph};
use crate::tape::Tape;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub step: f64,
    /// Entries compared per tensor; larger tensors are sampled.
    pub max_entries: Option<usize>,
    pub train_mode: bool,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { step: NETWORK_STEP, max_entries: Some(24), train_mode: true, seed: 0 }
    }
}

/// Step for whole-network checks. Batch norm over two or three sites at the
/// deepest stages is strongly curved, so the stencil needs a short step.
pub const NETWORK_STEP: f64 = 1e-6;

/// Denominator floor relative to the network-wide gradient scale. Tensors
/// whose exact gradient vanishes (a bias feeding batch norm) would otherwise
/// compare round-off against round-off.
pub const SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub trainable: bool,
    /// `max|a - n| / max(scale, SCALE_FLOOR * global)` over the compared
    /// entries, where `scale` is the tensor's largest gradient and `global`
    /// the network's; 0 for frozen tensors.
    pub rel_err: f64,
    pub compared: usize,
    /// Largest analytic gradient magnitude over the whole tensor.
    pub analytic_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    /// Frozen tensors whose analytic gradient is not exactly zero.
    pub fn leaking_frozen(&self) -> Vec<&str> {
        self.params.iter().filter(|p| !p.trainable && p.analytic_max != 0.0).map(|p| p.name.as_str()).collect()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() <= tol && self.leaking_frozen().is_empty()
    }
}

fn projected_loss(g: &mut NetworkGraph<f64>, input: &NetInput<f64>, r: &Matrix<f64>, train: bool) -> Result<f64> {
    let mut tape = Tape::new();
    let f = g.forward(&mut tape, input, train)?;
    let y = &tape.value(f.logits).feats;
    Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
}

/// Compares analytic gradients of `sum(R * logits)` for a fixed random `R`
/// against five-point central differences, tensor by tensor, under the
/// graph's regime.
pub fn gradcheck(graph: &NetworkGraph<f64>, input: &NetInput<f64>, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        bail!(InvalidInput, "finite-difference step must be positive");
    }
    let mut g = graph.clone();
    let mut tape = Tape::new();
    let f = g.forward(&mut tape, input, cfg.train_mode)?;
    let out = &tape.value(f.logits).feats;
    let mut rng = sample_rng(cfg.seed, 3000, 0);
    let r_data = (0..out.rows() * out.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = Matrix::from_vec(out.rows(), out.cols(), r_data)?;
    g.params_mut().zero_grad();
    tape.backward(g.params_mut(), f.logits, r.clone())?;
    drop(tape);
    let analytic: Vec<Vec<f64>> = g.params().iter().map(|p| p.grad.clone()).collect();
    let global = analytic.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);

    let mut report = Vec::new();
    for (id, grad) in analytic.iter().enumerate() {
        let (name, trainable, len) = {
            let p = g.params().get(id);
            (p.name.clone(), p.trainable, p.value.len())
        };
        let analytic_max = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if !trainable {
            report.push(ParamCheck { name, trainable, rel_err: 0.0, compared: 0, analytic_max });
            continue;
        }
        let entries: Vec<usize> = match cfg.max_entries {
            Some(m) if m < len => {
                let mut pick = sample_rng(cfg.seed, 3001, id as u64);
                (0..m).map(|_| pick.random_range(0..len)).collect()
            }
            _ => (0..len).collect(),
        };
        let mut numeric = Vec::with_capacity(entries.len());
        for &e in &entries {
            let orig = g.params().get(id).value.data()[e];
            let at = |delta: f64, g: &mut NetworkGraph<f64>| -> Result<f64> {
                g.params_mut().get_mut(id).value.data_mut()[e] = orig + delta;
                projected_loss(g, input, &r, cfg.train_mode)
            };
            let h = cfg.step;
            let (p1, m1, p2, m2) = (at(h, &mut g)?, at(-h, &mut g)?, at(2.0 * h, &mut g)?, at(-2.0 * h, &mut g)?);
            g.params_mut().get_mut(id).value.data_mut()[e] = orig;
            let d = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            if !d.is_finite() {
                bail!(Numeric, "finite difference for {name}[{e}] is not finite");
            }
            numeric.push(d);
        }
        let picked: Vec<f64> = entries.iter().map(|&e| grad[e]).collect();
        let diff = picked.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = picked.iter().chain(&numeric).map(|v| v.abs()).fold(SCALE_FLOOR * global, f64::max);
        let rel_err = if scale > 0.0 { diff / scale } else { 0.0 };
        report.push(ParamCheck { name, trainable, rel_err, compared: entries.len(), analytic_max });
    }
    Ok(GradcheckReport { params: report })
}
