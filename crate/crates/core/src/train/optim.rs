use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{bail, Result};
use crate::param::ParamStore;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// `lr0 * (1 + cos(pi t)) / 2`
    Cosine,
    /// `lr0 * (1 - t)^power`
    Poly { power: f64 },
    /// `lr0 * gamma^floor(epoch / every)`
    Step { every: usize, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { lr0: 0.1, momentum: 0.9, weight_decay: 1e-4, schedule: Schedule::Cosine, epochs: 60, seed: 0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            bail!(InvalidInput, "lr0 must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bail!(InvalidInput, "momentum must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            bail!(InvalidInput, "weight decay must be nonnegative");
        }
        if self.epochs == 0 {
            bail!(InvalidInput, "epochs must be at least 1");
        }
        match self.schedule {
            Schedule::Step { every, gamma } if every == 0 || !(gamma.is_finite() && gamma > 0.0) => {
                bail!(InvalidInput, "step schedule needs a positive period and factor")
            }
            Schedule::Poly { power } if !(power.is_finite() && power > 0.0) => bail!(InvalidInput, "poly power must be positive"),
            _ => {}
        }
        Ok(())
    }

    /// Learning rate at training progress `t` in `[0, 1]`.
    pub fn lr(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match self.schedule {
            Schedule::Cosine => self.lr0 * (1.0 + Float::cos(core::f64::consts::PI * t)) / 2.0,
            Schedule::Poly { power } => self.lr0 * Float::powf(1.0 - t, power),
            Schedule::Step { every, gamma } => {
                let epoch = Float::floor(t * self.epochs as f64) as i32;
                self.lr0 * Float::powi(gamma, epoch / every as i32)
            }
        }
    }
}

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone, Default)]
pub struct SgdState<S> {
    velocity: Vec<Vec<S>>,
}

impl<S: Real> SgdState<S> {
    pub fn new() -> Self {
        Self { velocity: Vec::new() }
    }
}

/// `v = momentum v + g + wd p; p -= lr(t) v` over trainable parameters.
/// Non-finite gradients abort before anything moves.
pub fn sgd_step<S: Real>(params: &mut ParamStore<S>, state: &mut SgdState<S>, cfg: &OptimizerConfig, t: f64) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.trainable && !p.grad.iter().all(|g| g.is_finite())) {
        bail!(Numeric, "non-finite gradient in {}", p.name);
    }
    if state.velocity.len() < params.len() {
        state.velocity.resize(params.len(), Vec::new());
    }
    let lr = S::lit(cfg.lr(t));
    let mu = S::lit(cfg.momentum);
    let wd = S::lit(cfg.weight_decay);
    for (p, v) in params.iter_mut().zip(state.velocity.iter_mut()) {
        if !p.trainable {
            continue;
        }
        if v.len() != p.grad.len() {
            *v = vec![S::zero(); p.grad.len()];
        }
        for ((w, &g), vi) in p.value.data_mut().iter_mut().zip(&p.grad).zip(v.iter_mut()) {
            *vi = mu * *vi + g + wd * *w;
            *w -= lr * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{ParamKind, ParamRole};
    use crate::tensor::Tensor;

    #[test]
    fn cosine_endpoints() {
        let cfg = OptimizerConfig { lr0: 0.3, ..Default::default() };
        assert_eq!(cfg.lr(0.0), 0.3);
        assert!(cfg.lr(1.0).abs() < 1e-15);
    }

    #[test]
    fn step_schedule_decays() {
        let cfg = OptimizerConfig { lr0: 1.0, epochs: 10, schedule: Schedule::Step { every: 5, gamma: 0.1 }, ..Default::default() };
        assert_eq!(cfg.lr(0.0), 1.0);
        assert!((cfg.lr(0.55) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn plain_gradient_descent() {
        let mut ps = ParamStore::<f64>::new();
        let id = ps.add("w".into(), Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap(), ParamRole::Output, ParamKind::LinearWeight);
        ps.get_mut(id).grad = vec![0.5, 0.25];
        let cfg = OptimizerConfig { lr0: 0.1, momentum: 0.0, weight_decay: 0.0, schedule: Schedule::Poly { power: 0.0 }, ..Default::default() };
        sgd_step(&mut ps, &mut SgdState::new(), &cfg, 0.5).unwrap();
        assert_eq!(ps.get(id).value.data(), &[1.0 - 0.05, -2.0 - 0.025]);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut ps = ParamStore::<f32>::new();
        let id = ps.add("w".into(), Tensor::zeros(&[1]), ParamRole::Output, ParamKind::LinearWeight);
        ps.get_mut(id).grad = vec![f32::NAN];
        let r = sgd_step(&mut ps, &mut SgdState::new(), &OptimizerConfig::default(), 0.0);
        assert!(matches!(r, Err(crate::Error::Numeric(_))));
        assert_eq!(ps.get(id).value.data(), &[0.0]);
    }
}
