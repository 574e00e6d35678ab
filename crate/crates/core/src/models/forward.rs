use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{ConvUnit, Decoder, Dims, FinetuneRegime, Head, LinearUnit, NetworkGraph, ResBlock, Section};
use crate::error::{bail, Result};
use crate::kernel_map::{build_kernel_map, build_transposed_map, KernelMap};
use crate::ops::batchnorm::{BnMode, DEFAULT_EPS, DEFAULT_MOMENTUM};
use crate::ops::conv2d::PlanarShape;
use crate::param::ParamStore;
use crate::real::Real;
use crate::tape::{Activation, BnCall, ConvWeight, Layout, NodeId, Tape};
use crate::tensor::Matrix;
use crate::voxel::{CoordSet, SparseVoxelTensor};

/// Network input: a (possibly batched) sparse tensor, or NHWC pixel rows.
#[derive(Debug, Clone)]
pub enum NetInput<S> {
    Sparse(SparseVoxelTensor<S>),
    Planar { feats: Matrix<S>, shape: PlanarShape },
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: NodeId,
    /// Active set of per-voxel predictions; `None` for classifiers.
    pub coords: Option<Arc<CoordSet>>,
}

#[derive(Default)]
struct MapCache {
    maps: Vec<(Arc<CoordSet>, usize, usize, Arc<KernelMap>)>,
}

impl MapCache {
    fn get(&mut self, input: &Arc<CoordSet>, kernel: usize, stride: usize) -> Result<Arc<KernelMap>> {
        if let Some((_, _, _, km)) = self.maps.iter().find(|(c, k, s, _)| Arc::ptr_eq(c, input) && *k == kernel && *s == stride) {
            return Ok(km.clone());
        }
        let km = Arc::new(build_kernel_map(input, kernel, stride)?);
        self.maps.push((input.clone(), kernel, stride, km.clone()));
        Ok(km)
    }
}

struct Ctx<'a, S> {
    params: &'a mut ParamStore<S>,
    regime: FinetuneRegime,
    train: bool,
    cache: MapCache,
}

impl<S: Real> Ctx<'_, S> {
    fn bn_call(&self, section: Section) -> BnCall {
        let update = self.train && (section != Section::Backbone || self.regime.backbone_bn_updates());
        BnCall {
            mode: if update { BnMode::Train } else { BnMode::Eval },
            stats_update: update,
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    fn conv(&mut self, tape: &mut Tape<S>, x: NodeId, u: &ConvUnit) -> Result<NodeId> {
        let mut y = match &tape.value(x).layout {
            Layout::Sparse(c) => {
                let c = c.clone();
                let km = self.cache.get(&c, u.kernel, u.stride)?;
                tape.sparse_conv(self.params, x, u.weight, km)?
            }
            Layout::Planar(_) => {
                let ConvWeight::Param(id) = u.weight else {
                    bail!(State, "planar conv {} cannot use a transform", u.name);
                };
                tape.planar_conv(self.params, x, id, u.stride)?
            }
            Layout::Flat => bail!(Shape, "conv {} applied after pooling", u.name),
        };
        if let Some(bn) = &u.bn {
            let call = self.bn_call(bn.section);
            y = tape.batch_norm(self.params, y, bn.ids, call)?;
        }
        if u.relu {
            y = tape.relu(y);
        }
        Ok(y)
    }

    fn deconv(&mut self, tape: &mut Tape<S>, x: NodeId, target: &Arc<CoordSet>, u: &ConvUnit) -> Result<NodeId> {
        let Layout::Sparse(c) = &tape.value(x).layout else {
            bail!(Shape, "deconv {} needs a sparse input", u.name);
        };
        let km = Arc::new(build_transposed_map(c, target, u.kernel, u.stride)?);
        tape.sparse_conv(self.params, x, u.weight, km)
    }

    fn block(&mut self, tape: &mut Tape<S>, x: NodeId, b: &ResBlock) -> Result<NodeId> {
        let mut h = x;
        for u in &b.convs {
            h = self.conv(tape, h, u)?;
        }
        let sc = match &b.down {
            Some(d) => self.conv(tape, x, d)?,
            None => x,
        };
        let s = tape.add(h, sc)?;
        Ok(tape.relu(s))
    }

    fn linear(&mut self, tape: &mut Tape<S>, x: NodeId, l: &LinearUnit) -> Result<NodeId> {
        tape.linear(self.params, x, l.weight, l.bias)
    }
}

fn coords_of<S: Real>(tape: &Tape<S>, id: NodeId) -> Option<Arc<CoordSet>> {
    tape.value(id).coords().cloned()
}

impl<S: Real> NetworkGraph<S> {
    /// Records one forward pass on `tape`. Training mode uses batch
    /// statistics where the regime allows it; evaluation always uses running
    /// statistics.
    pub fn forward(&mut self, tape: &mut Tape<S>, input: &NetInput<S>, train: bool) -> Result<Forward> {
        let act = match (input, self.spec.dims) {
            (NetInput::Sparse(t), Dims::Volumetric) => {
                if t.is_empty() {
                    bail!(InvalidInput, "empty sparse input");
                }
                Activation { feats: t.feats().clone(), layout: Layout::Sparse(t.coords().clone()) }
            }
            (NetInput::Planar { feats, shape }, Dims::Planar) => {
                if feats.rows() != shape.pixels() {
                    bail!(Shape, "{} pixel rows for shape {shape:?}", feats.rows());
                }
                Activation { feats: feats.clone(), layout: Layout::Planar(*shape) }
            }
            _ => bail!(InvalidInput, "input modality does not match a {:?} graph", self.spec.dims),
        };
        if act.feats.cols() != self.spec.in_dim {
            bail!(Shape, "input has {} channels, graph expects {}", act.feats.cols(), self.spec.in_dim);
        }
        let NetworkGraph { params, input: in_layer, stages, head, regime, stubs, .. } = self;
        let mut ctx = Ctx { params, regime: *regime, train, cache: MapCache::default() };
        let mut x = tape.input(act, false);
        for u in in_layer.iter() {
            x = ctx.conv(tape, x, u)?;
        }
        let mut enc = Vec::with_capacity(5);
        enc.push(x);
        for stage in stages.iter() {
            for b in stage {
                x = ctx.block(tape, x, b)?;
            }
            enc.push(x);
        }
        stubs.clear();
        stubs.extend(enc.iter().filter_map(|&e| coords_of(tape, e)));
        let (logits, coords) = match head {
            Head::Cls { fc1, bn, fc2 } => {
                let p = tape.global_pool(x)?;
                let h = ctx.linear(tape, p, fc1)?;
                let call = ctx.bn_call(bn.section);
                let h = tape.batch_norm(ctx.params, h, bn.ids, call)?;
                let h = tape.relu(h);
                (ctx.linear(tape, h, fc2)?, None)
            }
            Head::LinearCls { fc, bn } => {
                let p = tape.global_pool(x)?;
                let h = ctx.linear(tape, p, fc)?;
                let call = ctx.bn_call(bn.section);
                (tape.batch_norm(ctx.params, h, bn.ids, call)?, None)
            }
            Head::Seg { ups, decoders, classifier } => {
                let mut cur = x;
                for (d, (up, dec)) in ups.iter().zip(decoders.iter()).enumerate() {
                    let skip = enc[enc.len() - 2 - d];
                    let target = coords_of(tape, skip).expect("sparse encoder");
                    let u = ctx.deconv(tape, cur, &target, up)?;
                    cur = tape.concat(skip, u)?;
                    match dec {
                        Decoder::Blocks(blocks) => {
                            for b in blocks {
                                cur = ctx.block(tape, cur, b)?;
                            }
                        }
                        Decoder::Conv(c) => cur = ctx.conv(tape, cur, c)?,
                    }
                }
                let coords = coords_of(tape, cur);
                (ctx.linear(tape, cur, classifier)?, coords)
            }
        };
        Ok(Forward { logits, coords })
    }

    /// Evaluation-mode logits on a fresh tape.
    pub fn infer(&mut self, input: &NetInput<S>) -> Result<(Matrix<S>, Option<Arc<CoordSet>>)> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, input, false)?;
        Ok((tape.value(f.logits).feats.clone(), f.coords))
    }
}
