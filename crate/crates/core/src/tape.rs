//! Define-by-run reverse-mode tape.
//!
//! Every recorded op saves what its backward needs. `backward` walks nodes in
//! exact reverse recording order; gradients only reach trainable parameters,
//! so frozen parameters keep identically zero accumulators.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::inflation::{apply_raw, gradient_raw};
use crate::kernel_map::KernelMap;
use crate::ops::basic::{self, group_mean_backward, linear_backward, relu_backward, split_cols};
use crate::ops::batchnorm::{bn_backward_raw, bn_forward_raw, BnMode, BnSaved};
use crate::ops::conv2d::{conv2d_nhwc, conv2d_nhwc_backward, PlanarShape};
use crate::ops::sparse_conv::{gather_scatter, gather_scatter_backward};
use crate::param::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::{Matrix, Tensor};
use crate::voxel::CoordSet;

pub type NodeId = usize;

/// How activation rows are arranged.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// One row per active site.
    Sparse(Arc<CoordSet>),
    /// NHWC pixels.
    Planar(PlanarShape),
    /// One row per sample (after pooling).
    Flat,
}

impl Layout {
    fn same_sites(&self, other: &Layout) -> bool {
        match (self, other) {
            (Layout::Sparse(a), Layout::Sparse(b)) => Arc::ptr_eq(a, b) || a == b,
            (a, b) => a == b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation<S> {
    pub feats: Matrix<S>,
    pub layout: Layout,
}

impl<S: Real> Activation<S> {
    pub fn coords(&self) -> Option<&Arc<CoordSet>> {
        match &self.layout {
            Layout::Sparse(c) => Some(c),
            _ => None,
        }
    }
}

/// Source of a convolution weight tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvWeight {
    Param(ParamId),
    /// `W3d = w2d . T`, recomputed every forward.
    Transformed { w2d: ParamId, transform: ParamId, per_filter: bool },
}

/// Parameter ids of one batch-norm layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BnIds {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: ParamId,
    pub var: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnCall {
    pub mode: BnMode,
    pub stats_update: bool,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug)]
enum Op<S> {
    Input,
    SparseConv { x: NodeId, weight: ConvWeight, effective: Option<Tensor<S>>, out_ch: usize, km: Arc<KernelMap> },
    PlanarConv { x: NodeId, weight: ParamId, out_ch: usize, kernel: usize, stride: usize, in_shape: PlanarShape },
    BatchNorm { x: NodeId, gamma: ParamId, beta: ParamId, saved: BnSaved<S> },
    Relu { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Concat { a: NodeId, b: NodeId, left: usize },
    Pool { x: NodeId, groups: Vec<u32> },
    Linear { x: NodeId, weight: ParamId, bias: Option<ParamId> },
}

#[derive(Debug)]
struct Node<S> {
    value: Activation<S>,
    op: Op<S>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

fn weight_dims_3d<S: Real>(params: &ParamStore<S>, w: ConvWeight) -> Result<(usize, usize, usize)> {
    let d = match w {
        ConvWeight::Param(id) => params.get(id).value.dims().to_vec(),
        ConvWeight::Transformed { w2d, .. } => {
            let d = params.get(w2d).value.dims();
            let mut v = d.to_vec();
            v.push(d[3]);
            v
        }
    };
    if d.len() != 5 {
        bail!(Shape, "3D conv weight must be 5D, got {d:?}");
    }
    Ok((d[0], d[1], d[2]))
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Activation<S> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Activation<S>, op: Op<S>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        self.nodes.len() - 1
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn input(&mut self, value: Activation<S>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Input, requires_grad)
    }

    /// Materializes the 3D weights of a conv.
    pub fn effective_weight(params: &ParamStore<S>, weight: ConvWeight) -> Result<Tensor<S>> {
        match weight {
            ConvWeight::Param(id) => Ok(params.get(id).value.clone()),
            ConvWeight::Transformed { w2d, transform, per_filter } => {
                let w = &params.get(w2d).value;
                let d = w.dims();
                let out = apply_raw(w.data(), d[0] * d[1], d[2], params.get(transform).value.data(), per_filter);
                Tensor::from_vec(&[d[0], d[1], d[2], d[2], d[2]], out)
            }
        }
    }

    pub fn sparse_conv(&mut self, params: &ParamStore<S>, x: NodeId, weight: ConvWeight, km: Arc<KernelMap>) -> Result<NodeId> {
        let (m, n, k) = weight_dims_3d(params, weight)?;
        let xv = &self.nodes[x].value;
        if xv.feats.cols() != n {
            bail!(Shape, "conv expects {n} input channels, got {}", xv.feats.cols());
        }
        if xv.feats.rows() != km.input_len() || k != km.kernel() {
            bail!(Shape, "kernel map does not match the conv input");
        }
        let effective = match weight {
            ConvWeight::Param(_) => None,
            ConvWeight::Transformed { .. } => Some(Self::effective_weight(params, weight)?),
        };
        let w = match (&effective, weight) {
            (Some(t), _) => t.data(),
            (None, ConvWeight::Param(id)) => params.get(id).value.data(),
            (None, _) => unreachable!(),
        };
        let feats = gather_scatter(&xv.feats, w, m, &km);
        let trainable = match weight {
            ConvWeight::Param(id) => params.get(id).trainable,
            ConvWeight::Transformed { w2d, transform, .. } => params.get(w2d).trainable || params.get(transform).trainable,
        };
        let rg = self.rg(x) || trainable;
        let layout = Layout::Sparse(km.output().clone());
        Ok(self.push(Activation { feats, layout }, Op::SparseConv { x, weight, effective, out_ch: m, km }, rg))
    }

    pub fn planar_conv(&mut self, params: &ParamStore<S>, x: NodeId, weight: ParamId, stride: usize) -> Result<NodeId> {
        let w = &params.get(weight).value;
        let d = w.dims();
        if d.len() != 4 {
            bail!(Shape, "2D conv weight must be 4D, got {d:?}");
        }
        let xv = &self.nodes[x].value;
        let in_shape = match xv.layout {
            Layout::Planar(s) => s,
            _ => bail!(Shape, "planar conv on a non-planar activation"),
        };
        if xv.feats.cols() != d[1] {
            bail!(Shape, "conv expects {} input channels, got {}", d[1], xv.feats.cols());
        }
        let (feats, os) = conv2d_nhwc(&xv.feats, in_shape, w.data(), d[0], d[2], stride);
        let rg = self.rg(x) || params.get(weight).trainable;
        let op = Op::PlanarConv { x, weight, out_ch: d[0], kernel: d[2], stride, in_shape };
        Ok(self.push(Activation { feats, layout: Layout::Planar(os) }, op, rg))
    }

    pub fn batch_norm(&mut self, params: &mut ParamStore<S>, x: NodeId, ids: BnIds, call: BnCall) -> Result<NodeId> {
        let mut mean = core::mem::replace(&mut params.get_mut(ids.mean).value, Tensor::zeros(&[0]));
        let mut var = core::mem::replace(&mut params.get_mut(ids.var).value, Tensor::zeros(&[0]));
        let res = bn_forward_raw(
            &self.nodes[x].value.feats,
            params.get(ids.gamma).value.data(),
            params.get(ids.beta).value.data(),
            mean.data_mut(),
            var.data_mut(),
            call.momentum,
            call.eps,
            call.mode,
            call.stats_update,
        );
        params.get_mut(ids.mean).value = mean;
        params.get_mut(ids.var).value = var;
        let (y, saved) = res?;
        let rg = self.rg(x) || params.get(ids.gamma).trainable || params.get(ids.beta).trainable;
        let layout = self.nodes[x].value.layout.clone();
        Ok(self.push(Activation { feats: y, layout }, Op::BatchNorm { x, gamma: ids.gamma, beta: ids.beta, saved }, rg))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x].value;
        let act = Activation { feats: basic::relu(&v.feats), layout: v.layout.clone() };
        let rg = self.rg(x);
        self.push(act, Op::Relu { x }, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if !va.layout.same_sites(&vb.layout) {
            bail!(Shape, "residual add over different active sets");
        }
        let act = Activation { feats: basic::add(&va.feats, &vb.feats)?, layout: va.layout.clone() };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(act, Op::Add { a, b }, rg))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if !va.layout.same_sites(&vb.layout) {
            bail!(Coordinate, "concat over different active sets");
        }
        let left = va.feats.cols();
        let act = Activation { feats: basic::concat(&va.feats, &vb.feats)?, layout: va.layout.clone() };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(act, Op::Concat { a, b, left }, rg))
    }

    /// Mean over the active sites (or pixels) of each sample.
    pub fn global_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let v = &self.nodes[x].value;
        let (groups, count): (Vec<u32>, usize) = match &v.layout {
            Layout::Sparse(c) => (c.coords().iter().map(|c| c.batch).collect(), c.batch_size()),
            Layout::Planar(s) => {
                let per = s.height * s.width;
                ((0..s.pixels()).map(|r| (r / per) as u32).collect(), s.batch)
            }
            Layout::Flat => bail!(Shape, "pooling an already pooled activation"),
        };
        let feats = basic::group_mean(&v.feats, &groups, count)?;
        let rg = self.rg(x);
        Ok(self.push(Activation { feats, layout: Layout::Flat }, Op::Pool { x, groups }, rg))
    }

    pub fn linear(&mut self, params: &ParamStore<S>, x: NodeId, weight: ParamId, bias: Option<ParamId>) -> Result<NodeId> {
        let v = &self.nodes[x].value;
        let b = bias.map(|b| params.get(b).value.data());
        let feats = basic::linear(&v.feats, &params.get(weight).value, b)?;
        let rg = self.rg(x) || params.get(weight).trainable || bias.is_some_and(|b| params.get(b).trainable);
        let layout = v.layout.clone();
        Ok(self.push(Activation { feats, layout }, Op::Linear { x, weight, bias }, rg))
    }

    /// Back-propagates `grad` from `output`, accumulating into trainable
    /// parameter gradients. Returns per-node gradients for input leaves that
    /// were recorded with `requires_grad`.
    pub fn backward(&self, params: &mut ParamStore<S>, output: NodeId, grad: Matrix<S>) -> Result<Vec<Option<Matrix<S>>>> {
        if self.nodes.is_empty() || output >= self.nodes.len() {
            bail!(State, "backward called before any forward was recorded");
        }
        let out = &self.nodes[output].value.feats;
        if grad.rows() != out.rows() || grad.cols() != out.cols() {
            bail!(Shape, "loss gradient {}x{} vs output {}x{}", grad.rows(), grad.cols(), out.rows(), out.cols());
        }
        let mut grads: Vec<Option<Matrix<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output] = Some(grad);
        for id in (0..=output).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Input) {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => unreachable!(),
                Op::SparseConv { x, weight, effective, out_ch, km } => {
                    let xv = &self.nodes[*x].value.feats;
                    let w_trainable = match *weight {
                        ConvWeight::Param(p) => params.get(p).trainable,
                        ConvWeight::Transformed { w2d, transform, .. } => {
                            params.get(w2d).trainable || params.get(transform).trainable
                        }
                    };
                    let (dx, dw) = {
                        let w = match (effective, weight) {
                            (Some(t), _) => t.data(),
                            (None, ConvWeight::Param(p)) => params.get(*p).value.data(),
                            (None, _) => unreachable!(),
                        };
                        gather_scatter_backward(xv, w, *out_ch, km, &g, self.rg(*x), w_trainable)
                    };
                    if let Some(dw) = dw {
                        match *weight {
                            ConvWeight::Param(p) => params.accumulate(p, &dw),
                            ConvWeight::Transformed { w2d, transform, per_filter } => {
                                let want_w2d = params.get(w2d).trainable;
                                let d = params.get(w2d).value.dims().to_vec();
                                let (dt, dw2) = gradient_raw(
                                    &dw,
                                    params.get(w2d).value.data(),
                                    d[0] * d[1],
                                    d[2],
                                    params.get(transform).value.data(),
                                    per_filter,
                                    want_w2d,
                                );
                                params.accumulate(transform, &dt);
                                if let Some(dw2) = dw2 {
                                    params.accumulate(w2d, &dw2);
                                }
                            }
                        }
                    }
                    if let Some(dx) = dx {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::PlanarConv { x, weight, out_ch, kernel, stride, in_shape } => {
                    let trainable = params.get(*weight).trainable;
                    let (dx, dw) = conv2d_nhwc_backward(
                        &self.nodes[*x].value.feats,
                        *in_shape,
                        params.get(*weight).value.data(),
                        *out_ch,
                        *kernel,
                        *stride,
                        &g,
                        self.rg(*x),
                        trainable,
                    );
                    if let Some(dw) = dw {
                        params.accumulate(*weight, &dw);
                    }
                    if let Some(dx) = dx {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::BatchNorm { x, gamma, beta, saved } => {
                    let (dx, dgamma, dbeta) = bn_backward_raw(&g, params.get(*gamma).value.data(), saved);
                    params.accumulate(*gamma, &dgamma);
                    params.accumulate(*beta, &dbeta);
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Relu { x } => {
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, relu_backward(&node.value.feats, &g));
                    }
                }
                Op::Add { a, b } => {
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Concat { a, b, left } => {
                    let (ga, gb) = split_cols(&g, *left);
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Pool { x, groups } => {
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, group_mean_backward(&g, groups));
                    }
                }
                Op::Linear { x, weight, bias } => {
                    let (dx, dw, db) = linear_backward(&self.nodes[*x].value.feats, &params.get(*weight).value, &g);
                    params.accumulate(*weight, &dw);
                    if let Some(b) = bias {
                        params.accumulate(*b, &db);
                    }
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, dx);
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate<S: Real>(grads: &mut [Option<Matrix<S>>], id: NodeId, g: Matrix<S>) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Zero matrix shaped like `m`.
pub fn zeros_like<S: Real>(m: &Matrix<S>) -> Matrix<S> {
    Matrix::zeros(m.rows(), m.cols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{ParamKind, ParamRole};
    use alloc::vec;

    #[test]
    fn backward_before_forward_is_state_error() {
        let tape = Tape::<f64>::new();
        let mut params = ParamStore::new();
        let r = tape.backward(&mut params, 0, Matrix::zeros(1, 1));
        assert!(matches!(r, Err(crate::Error::State(_))));
    }

    #[test]
    fn linear_closed_form_gradient() {
        let mut params = ParamStore::<f64>::new();
        let w = params.add("fc.weight".into(), Tensor::from_vec(&[2, 3], vec![0.1; 6]).unwrap(), ParamRole::Output, ParamKind::LinearWeight);
        let mut tape = Tape::new();
        let x = Matrix::from_vec(1, 3, vec![1.0, -2.0, 3.0]).unwrap();
        let xi = tape.input(Activation { feats: x, layout: Layout::Flat }, false);
        let y = tape.linear(&params, xi, w, None).unwrap();
        let g = Matrix::from_vec(1, 2, vec![2.0, -1.0]).unwrap();
        tape.backward(&mut params, y, g).unwrap();
        assert_eq!(params.get(w).grad, vec![2.0, -4.0, 6.0, -1.0, 2.0, -3.0]);
    }

    #[test]
    fn frozen_parameter_gets_no_gradient() {
        let mut params = ParamStore::<f64>::new();
        let w = params.add("fc.weight".into(), Tensor::from_vec(&[1, 1], vec![3.0]).unwrap(), ParamRole::Backbone, ParamKind::LinearWeight);
        params.get_mut(w).trainable = false;
        let mut tape = Tape::new();
        let xi = tape.input(Activation { feats: Matrix::from_vec(1, 1, vec![1.0]).unwrap(), layout: Layout::Flat }, true);
        let y = tape.linear(&params, xi, w, None).unwrap();
        let grads = tape.backward(&mut params, y, Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(params.get(w).grad, vec![0.0]);
        assert_eq!(grads[xi].as_ref().unwrap().data(), &[3.0]);
    }
}
