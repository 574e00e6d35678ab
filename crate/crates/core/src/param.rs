//! Named parameter storage with trainability masks and gradient buffers.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub type ParamId = usize;

/// Which part of a network a parameter belongs to; regimes freeze by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRole {
    Input,
    Backbone,
    Output,
    Transform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    ConvWeight,
    LinearWeight,
    Bias,
    BnGamma,
    BnBeta,
    RunningMean,
    RunningVar,
    Transform,
}

impl ParamKind {
    /// Running statistics change in the forward pass, never by the optimizer.
    pub fn is_buffer(self) -> bool {
        matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Vec<S>,
    pub trainable: bool,
    pub role: ParamRole,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<S> {
    params: Vec<Param<S>>,
}

impl<S: Real> ParamStore<S> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: String, value: Tensor<S>, role: ParamRole, kind: ParamKind) -> ParamId {
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        let grad = vec![S::zero(); value.len()];
        self.params.push(Param { name, value, grad, trainable: !kind.is_buffer(), role, kind });
        self.params.len() - 1
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.params.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Param<S> {
        &self.params[id]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<S> {
        &mut self.params[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<S>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = S::zero());
        }
    }

    /// Adds `delta` into the gradient of `id` if it is trainable.
    pub fn accumulate(&mut self, id: ParamId, delta: &[S]) {
        let p = &mut self.params[id];
        if !p.trainable {
            return;
        }
        debug_assert_eq!(p.grad.len(), delta.len());
        for (g, d) in p.grad.iter_mut().zip(delta) {
            *g += *d;
        }
    }

    /// Replaces the value of `id` keeping dims.
    pub fn assign(&mut self, id: ParamId, value: Tensor<S>) -> Result<()> {
        let p = &mut self.params[id];
        if p.value.dims() != value.dims() {
            bail!(Shape, "parameter {} has dims {:?}, got {:?}", p.name, p.value.dims(), value.dims());
        }
        p.value = value;
        Ok(())
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn cast<T: Real>(&self) -> ParamStore<T> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.iter().map(|g| T::lit(g.as_f64())).collect(),
                    trainable: p.trainable,
                    role: p.role,
                    kind: p.kind,
                })
                .collect(),
        }
    }
}
