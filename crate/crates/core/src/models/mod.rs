//! Inflated ResNet builders, finetune regimes and weight import/export.
//!
//! Every graph exists in a planar (2D, dense NHWC) or volumetric (3D,
//! sparse) flavor. Both flavors of one architecture share parameter names,
//! so a 2D archive lines up with a 3D graph tensor for tensor.
//!
//! Stage layout: the input layer ends at stride level `L` (1 for the
//! three-conv input layer, 0 for the single-conv linear input) and each of
//! the four residual stages halves the resolution once more. The segmentation
//! decoder walks the same levels back up to `L`.

mod build;
mod forward;

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::archive::{ArchiveTensor, Dimensionality, WeightArchive};
use crate::error::{bail, Result};
use crate::inflation::{init_transform, Sharing, TransformInit};
use crate::param::{ParamId, ParamKind, ParamRole, ParamStore};
use crate::real::Real;
use crate::tape::{BnIds, ConvWeight};
use crate::tensor::Tensor;
use crate::voxel::CoordSet;

pub use build::{build, build_cls, build_linear_io, build_linear_net_no_backbone, build_seg};
pub use forward::{Forward, NetInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchKind {
    ResnetCls,
    ResnetSeg,
    LinearIoCls,
    LinearIoSeg,
    LinearBaseline,
}

impl ArchKind {
    pub fn is_seg(self) -> bool {
        matches!(self, ArchKind::ResnetSeg | ArchKind::LinearIoSeg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Depth {
    /// One basic block per stage.
    Tiny,
    /// `[2, 2, 2, 2]` basic blocks.
    R18,
    /// `[3, 4, 6, 3]` bottleneck blocks.
    R50,
}

impl Depth {
    pub fn from_number(d: u32) -> Result<Self> {
        match d {
            18 => Ok(Depth::R18),
            50 => Ok(Depth::R50),
            other => bail!(Unsupported, "ResNet depth {other}"),
        }
    }

    pub fn blocks(self) -> [usize; 4] {
        match self {
            Depth::Tiny => [1, 1, 1, 1],
            Depth::R18 => [2, 2, 2, 2],
            Depth::R50 => [3, 4, 6, 3],
        }
    }

    pub fn bottleneck(self) -> bool {
        self == Depth::R50
    }

    pub fn name(self) -> &'static str {
        match self {
            Depth::Tiny => "tiny",
            Depth::R18 => "resnet18",
            Depth::R50 => "resnet50",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dims {
    Planar,
    Volumetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub depth: Depth,
    pub dims: Dims,
    pub in_dim: usize,
    pub classes: usize,
    pub width_mult: f64,
    pub seed: u64,
    /// Allocate zero tensors only (no random init); for census checks.
    pub shape_only: bool,
}

impl ArchSpec {
    pub fn new(kind: ArchKind, depth: Depth, in_dim: usize, classes: usize) -> Self {
        Self { kind, depth, dims: Dims::Volumetric, in_dim, classes, width_mult: 0.25, seed: 0, shape_only: false }
    }

    /// Parses `resnet18-cls`, `resnet50-seg`, `tiny-cls`, `linear-io-cls`,
    /// `linear-io-seg`, `linear-baseline`. Linear-I/O backbones use `depth`.
    pub fn from_name(name: &str, depth: Depth, in_dim: usize, classes: usize) -> Result<Self> {
        let (kind, depth) = match name {
            "resnet18-cls" => (ArchKind::ResnetCls, Depth::R18),
            "resnet18-seg" => (ArchKind::ResnetSeg, Depth::R18),
            "resnet50-cls" => (ArchKind::ResnetCls, Depth::R50),
            "resnet50-seg" => (ArchKind::ResnetSeg, Depth::R50),
            "tiny-cls" => (ArchKind::ResnetCls, Depth::Tiny),
            "tiny-seg" => (ArchKind::ResnetSeg, Depth::Tiny),
            "linear-io-cls" => (ArchKind::LinearIoCls, depth),
            "linear-io-seg" => (ArchKind::LinearIoSeg, depth),
            "linear-baseline" => (ArchKind::LinearBaseline, depth),
            other => bail!(Unsupported, "unknown architecture `{other}`"),
        };
        Ok(Self::new(kind, depth, in_dim, classes))
    }

    pub fn planar(mut self) -> Self {
        self.dims = Dims::Planar;
        self
    }

    pub fn with_width(mut self, mult: f64) -> Self {
        self.width_mult = mult;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn shape_only(mut self) -> Self {
        self.shape_only = true;
        self
    }

    /// Scaled channel count of a nominal width.
    pub fn width(&self, nominal: usize) -> usize {
        (num_traits::Float::round(nominal as f64 * self.width_mult) as usize).max(1)
    }

    /// `(in, out)` channels of residual stage `i` (0-based).
    pub fn stage_dims(&self, i: usize) -> (usize, usize) {
        let exp = if self.depth.bottleneck() { 4 } else { 1 };
        let out = self.width(64 << i) * exp;
        let input = if i == 0 { self.width(64) } else { self.width(64 << (i - 1)) * exp };
        (input, out)
    }
}

/// Trainability and batch-norm policy of a finetuning run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FinetuneRegime {
    /// Input and output layers only; backbone BN uses running stats.
    IO,
    /// Plus backbone BN statistics updates (affine frozen).
    IoStats,
    /// Plus backbone BN affine parameters.
    IoBn,
    Whole,
    /// Frozen 2D weights, one trainable transform for every layer.
    LearnTShared,
    /// Frozen 2D weights, one trainable transform per filter.
    LearnTPerFilter,
}

impl FinetuneRegime {
    pub const ALL: [FinetuneRegime; 6] = [
        FinetuneRegime::IO,
        FinetuneRegime::IoStats,
        FinetuneRegime::IoBn,
        FinetuneRegime::Whole,
        FinetuneRegime::LearnTShared,
        FinetuneRegime::LearnTPerFilter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FinetuneRegime::IO => "io",
            FinetuneRegime::IoStats => "io-stats",
            FinetuneRegime::IoBn => "io-bn",
            FinetuneRegime::Whole => "whole",
            FinetuneRegime::LearnTShared => "learn-t-shared",
            FinetuneRegime::LearnTPerFilter => "learn-t-perfilter",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| crate::Error::InvalidInput(format!("unknown regime `{s}` (io|io-stats|io-bn|whole|learn-t-shared|learn-t-perfilter)")))
    }

    pub fn learn_t(self) -> Option<Sharing> {
        match self {
            FinetuneRegime::LearnTShared => Some(Sharing::Shared),
            FinetuneRegime::LearnTPerFilter => Some(Sharing::PerFilter),
            _ => None,
        }
    }

    /// Whether a parameter of this role and kind is optimized.
    pub fn trains(self, role: ParamRole, kind: ParamKind) -> bool {
        if kind.is_buffer() {
            return false;
        }
        match role {
            ParamRole::Input | ParamRole::Output => true,
            ParamRole::Transform => self.learn_t().is_some() || self == FinetuneRegime::Whole,
            ParamRole::Backbone => match self {
                FinetuneRegime::IO | FinetuneRegime::IoStats => false,
                FinetuneRegime::IoBn => matches!(kind, ParamKind::BnGamma | ParamKind::BnBeta),
                FinetuneRegime::Whole => true,
                FinetuneRegime::LearnTShared | FinetuneRegime::LearnTPerFilter => false,
            },
        }
    }

    /// Backbone batch norm normalizes by batch statistics and updates the
    /// running estimates during training.
    pub fn backbone_bn_updates(self) -> bool {
        self != FinetuneRegime::IO
    }
}

/// Network section of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Section {
    Input,
    Backbone,
    Output,
}

impl Section {
    fn role(self) -> ParamRole {
        match self {
            Section::Input => ParamRole::Input,
            Section::Backbone => ParamRole::Backbone,
            Section::Output => ParamRole::Output,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Deconv,
    BatchNorm,
    Relu,
    Pool,
    Linear,
    Concat,
    /// Residual addition closing a block.
    Residual,
}

/// One row of a layer census.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerInfo {
    pub kind: LayerKind,
    pub section: Section,
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct BnUnit {
    pub ids: BnIds,
    pub section: Section,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvUnit {
    pub name: String,
    pub section: Section,
    pub weight: ConvWeight,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bn: Option<BnUnit>,
    pub relu: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct ResBlock {
    pub name: String,
    pub convs: Vec<ConvUnit>,
    pub down: Option<ConvUnit>,
}

#[derive(Debug, Clone)]
pub(crate) struct LinearUnit {
    pub name: String,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_f: usize,
    pub out_f: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Decoder {
    Blocks(Vec<ResBlock>),
    Conv(ConvUnit),
}

#[derive(Debug, Clone)]
pub(crate) enum Head {
    /// pool, fc1, bn, relu, fc2
    Cls { fc1: LinearUnit, bn: BnUnit, fc2: LinearUnit },
    /// pool, fc, bn
    LinearCls { fc: LinearUnit, bn: BnUnit },
    Seg { ups: Vec<ConvUnit>, decoders: Vec<Decoder>, classifier: LinearUnit },
}

/// A built network: layer structure, parameters and regime state.
#[derive(Debug, Clone)]
pub struct NetworkGraph<S = f32> {
    pub(crate) spec: ArchSpec,
    pub(crate) params: ParamStore<S>,
    pub(crate) input: Vec<ConvUnit>,
    pub(crate) stages: Vec<Vec<ResBlock>>,
    pub(crate) head: Head,
    pub(crate) regime: FinetuneRegime,
    pub(crate) learn_t: Option<Sharing>,
    pub(crate) stubs: Vec<Arc<CoordSet>>,
}

/// Which parameters [`NetworkGraph::load_archive`] takes from an archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadScope {
    /// Every parameter must be present.
    All,
    /// Backbone parameters only; input and output layers keep their init.
    Backbone,
}

impl<S: Real> NetworkGraph<S> {
    #[inline]
    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    #[inline]
    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    #[inline]
    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    #[inline]
    pub fn regime(&self) -> FinetuneRegime {
        self.regime
    }

    pub fn learnable_transform(&self) -> Option<Sharing> {
        self.learn_t
    }

    /// Encoder coordinate sets of the last volumetric forward, finest first.
    pub fn encoder_stubs(&self) -> &[Arc<CoordSet>] {
        &self.stubs
    }

    /// `(decoder stage, encoder stage)` pairs joined by a skip connection;
    /// encoder stage 0 is the input layer.
    pub fn skip_links(&self) -> Vec<(usize, usize)> {
        match &self.head {
            Head::Seg { ups, .. } => (0..ups.len()).map(|d| (d, ups.len() - 1 - d)).collect(),
            _ => Vec::new(),
        }
    }

    pub fn set_regime(&mut self, r: FinetuneRegime) -> Result<()> {
        match (r.learn_t(), self.learn_t) {
            (Some(_), None) => bail!(State, "regime {} needs a graph built from a 2D archive with a learnable transform", r.name()),
            (Some(want), Some(have)) if want != have => {
                bail!(State, "regime {} does not match the attached {:?} transform", r.name(), have)
            }
            _ => {}
        }
        for p in self.params.iter_mut() {
            p.trainable = r.trains(p.role, p.kind);
        }
        self.params.zero_grad();
        self.regime = r;
        Ok(())
    }

    pub fn cast<T: Real>(&self) -> NetworkGraph<T> {
        NetworkGraph {
            spec: self.spec.clone(),
            params: self.params.cast(),
            input: self.input.clone(),
            stages: self.stages.clone(),
            head: self.head.clone(),
            regime: self.regime,
            learn_t: self.learn_t,
            stubs: self.stubs.clone(),
        }
    }

    /// Names of currently trainable parameters.
    pub fn trainable_names(&self) -> Vec<&str> {
        self.params.iter().filter(|p| p.trainable).map(|p| p.name.as_str()).collect()
    }

    /// Ordered layer census.
    pub fn census(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        for u in &self.input {
            conv_census(&mut out, u, LayerKind::Conv);
        }
        for stage in &self.stages {
            for b in stage {
                block_census(&mut out, b);
            }
        }
        let lin = |out: &mut Vec<LayerInfo>, l: &LinearUnit| {
            out.push(LayerInfo {
                kind: LayerKind::Linear,
                section: Section::Output,
                name: l.name.clone(),
                in_ch: l.in_f,
                out_ch: l.out_f,
                kernel: 0,
                stride: 0,
            })
        };
        let pool = |out: &mut Vec<LayerInfo>, ch: usize| {
            out.push(info(LayerKind::Pool, Section::Output, "head.pool", ch, ch));
        };
        match &self.head {
            Head::Cls { fc1, bn, fc2 } => {
                pool(&mut out, fc1.in_f);
                lin(&mut out, fc1);
                out.push(info(LayerKind::BatchNorm, bn.section, "head.bn1", fc1.out_f, fc1.out_f));
                out.push(info(LayerKind::Relu, bn.section, "head.relu", fc1.out_f, fc1.out_f));
                lin(&mut out, fc2);
            }
            Head::LinearCls { fc, bn } => {
                pool(&mut out, fc.in_f);
                lin(&mut out, fc);
                out.push(info(LayerKind::BatchNorm, bn.section, "head.bn", fc.out_f, fc.out_f));
            }
            Head::Seg { ups, decoders, classifier } => {
                let skips = self.skip_widths();
                for (d, (up, dec)) in ups.iter().zip(decoders).enumerate() {
                    conv_census(&mut out, up, LayerKind::Deconv);
                    let w = skips[d] + up.out_ch;
                    out.push(info(LayerKind::Concat, Section::Output, &format!("decode{}.concat", d + 1), w, w));
                    match dec {
                        Decoder::Blocks(blocks) => blocks.iter().for_each(|b| block_census(&mut out, b)),
                        Decoder::Conv(u) => conv_census(&mut out, u, LayerKind::Conv),
                    }
                }
                lin(&mut out, classifier);
            }
        }
        out
    }

    /// Channel widths of the encoder partners of decoder stages 1..=4.
    pub(crate) fn skip_widths(&self) -> Vec<usize> {
        let input_w = self.input.last().map_or(0, |u| u.out_ch);
        let mut enc = Vec::with_capacity(5);
        enc.push(input_w);
        for i in 0..self.stages.len() {
            enc.push(self.spec.stage_dims(i).1);
        }
        (0..self.stages.len()).map(|d| enc[self.stages.len() - 1 - d]).collect()
    }

    fn all_conv_units(&self) -> Vec<&ConvUnit> {
        let mut v: Vec<&ConvUnit> = self.input.iter().collect();
        for stage in &self.stages {
            for b in stage {
                v.extend(b.convs.iter());
                v.extend(b.down.iter());
            }
        }
        if let Head::Seg { ups, decoders, .. } = &self.head {
            v.extend(ups.iter());
            for d in decoders {
                match d {
                    Decoder::Blocks(bs) => {
                        for b in bs {
                            v.extend(b.convs.iter());
                            v.extend(b.down.iter());
                        }
                    }
                    Decoder::Conv(u) => v.push(u),
                }
            }
        }
        v
    }

    fn dimensionality(&self) -> Dimensionality {
        match self.spec.dims {
            Dims::Planar => Dimensionality::Source2d,
            Dims::Volumetric => Dimensionality::Inflated3d,
        }
    }
}

fn info(kind: LayerKind, section: Section, name: &str, in_ch: usize, out_ch: usize) -> LayerInfo {
    LayerInfo { kind, section, name: name.into(), in_ch, out_ch, kernel: 0, stride: 0 }
}

fn conv_census(out: &mut Vec<LayerInfo>, u: &ConvUnit, kind: LayerKind) {
    out.push(LayerInfo {
        kind,
        section: u.section,
        name: u.name.clone(),
        in_ch: u.in_ch,
        out_ch: u.out_ch,
        kernel: u.kernel,
        stride: u.stride,
    });
    if u.bn.is_some() {
        out.push(info(LayerKind::BatchNorm, u.section, &format!("{}.bn", u.name), u.out_ch, u.out_ch));
    }
    if u.relu {
        out.push(info(LayerKind::Relu, u.section, &format!("{}.relu", u.name), u.out_ch, u.out_ch));
    }
}

fn block_census(out: &mut Vec<LayerInfo>, b: &ResBlock) {
    for u in &b.convs {
        conv_census(out, u, LayerKind::Conv);
    }
    if let Some(d) = &b.down {
        conv_census(out, d, LayerKind::Conv);
    }
    let ch = b.convs.last().map_or(0, |u| u.out_ch);
    out.push(info(LayerKind::Residual, b.convs[0].section, &b.name, ch, ch));
    out.push(info(LayerKind::Relu, b.convs[0].section, &format!("{}.relu", b.name), ch, ch));
}

impl NetworkGraph<f32> {
    /// All parameters and buffers as an archive. Transformed convs export
    /// their effective 3D weights plus the transform as `t.*` records.
    pub fn export_archive(&self) -> Result<WeightArchive> {
        let mut a = WeightArchive::new(self.dimensionality());
        let mut transforms_done = Vec::new();
        for u in self.all_conv_units() {
            if let ConvWeight::Transformed { transform, per_filter, .. } = u.weight {
                let w = crate::tape::Tape::effective_weight(&self.params, u.weight)?;
                a.insert_tensor(&format!("{}.weight", u.name), &w)?;
                if transforms_done.contains(&transform) {
                    continue;
                }
                transforms_done.push(transform);
                let t = &self.params.get(transform);
                if per_filter {
                    let d = t.value.dims();
                    let block = d[2] * d[3];
                    for m in 0..d[0] {
                        for n in 0..d[1] {
                            let off = (m * d[1] + n) * block;
                            a.insert(ArchiveTensor {
                                name: format!("{}.{m}.{n}", t.name),
                                dims: alloc::vec![d[2] as u64, d[3] as u64],
                                values: t.value.data()[off..off + block].to_vec(),
                            })?;
                        }
                    }
                } else {
                    a.insert_tensor(&t.name, &t.value)?;
                }
            }
        }
        for p in self.params.iter() {
            if p.kind == ParamKind::Transform || a.get(&p.name).is_some() {
                continue;
            }
            a.insert_tensor(&p.name, &p.value)?;
        }
        Ok(a)
    }

    /// Copies named tensors from `archive`. Dims must match exactly.
    pub fn load_archive(&mut self, archive: &WeightArchive, scope: LoadScope) -> Result<()> {
        if self.learn_t.is_some() {
            bail!(State, "cannot load plain weights into a graph with a learnable transform");
        }
        if archive.dimensionality() != self.dimensionality() {
            bail!(Archive, "archive is {:?}, graph expects {:?}", archive.dimensionality(), self.dimensionality());
        }
        for id in 0..self.params.len() {
            let p = self.params.get(id);
            if scope == LoadScope::Backbone && p.role != ParamRole::Backbone {
                continue;
            }
            let rec = archive.require(&p.name)?;
            if rec.dims_usize() != p.value.dims() {
                bail!(Archive, "tensor {} is {:?}, expected {:?}", p.name, rec.dims, p.value.dims());
            }
            let t = Tensor::from_vec(p.value.dims(), rec.values.clone())?;
            self.params.get_mut(id).value = t;
        }
        Ok(())
    }

    /// Rebuilds the backbone from a 2D archive with `W3d = W2d . T`, where
    /// `T` is a fresh learnable transform. K=1 convs take their 2D weights
    /// unchanged; batch-norm tensors are copied. Resets the regime to
    /// [`FinetuneRegime::Whole`].
    pub fn attach_learnable_transform(&mut self, source: &WeightArchive, sharing: Sharing, init: TransformInit, seed: u64) -> Result<()> {
        if self.spec.dims != Dims::Volumetric {
            bail!(State, "learnable transforms apply to volumetric graphs");
        }
        if source.dimensionality() != Dimensionality::Source2d {
            bail!(Archive, "learnable transforms need a 2D source archive");
        }
        if self.learn_t.is_some() {
            bail!(State, "a learnable transform is already attached");
        }
        let mut shared: Option<ParamId> = None;
        let mut layer_idx = 0u64;
        let units: Vec<(usize, usize, usize)> = self
            .stages
            .iter()
            .enumerate()
            .flat_map(|(s, stage)| {
                stage.iter().enumerate().flat_map(move |(b, blk)| {
                    (0..blk.convs.len() + usize::from(blk.down.is_some())).map(move |c| (s, b, c))
                })
            })
            .collect();
        for (s, b, c) in units {
            let blk = &self.stages[s][b];
            let u = if c < blk.convs.len() { &blk.convs[c] } else { blk.down.as_ref().expect("down") };
            let ConvWeight::Param(wid) = u.weight else {
                bail!(State, "conv {} already transformed", u.name);
            };
            let (m, n, k) = (u.out_ch, u.in_ch, u.kernel);
            let name = format!("{}.weight", u.name);
            let rec = source.require(&name)?;
            if rec.dims_usize() != [m, n, k, k] {
                bail!(Archive, "tensor {name} is {:?}, expected [{m}, {n}, {k}, {k}]", rec.dims);
            }
            let new_weight = if k == 1 {
                self.params.assign(wid, Tensor::from_vec(&[m, n, 1, 1, 1], rec.values.clone())?)?;
                ConvWeight::Param(wid)
            } else {
                self.params.get_mut(wid).value = Tensor::from_vec(&[m, n, k, k], rec.values.clone())?;
                self.params.get_mut(wid).grad = alloc::vec![0.0; m * n * k * k];
                let (tid, per_filter) = match sharing {
                    Sharing::Shared => {
                        let tid = match shared {
                            Some(t) => t,
                            None => {
                                let t = init_transform::<f32>(init, k, Sharing::Shared, (1, 1), seed)?;
                                let t = self.params.add("t.shared".into(), t.into_matrices(), ParamRole::Transform, ParamKind::Transform);
                                shared = Some(t);
                                t
                            }
                        };
                        if self.params.get(tid).value.dims()[0] != k * k {
                            bail!(Unsupported, "a shared transform needs one kernel size across layers");
                        }
                        (tid, false)
                    }
                    Sharing::PerFilter => {
                        let t = init_transform::<f32>(init, k, Sharing::PerFilter, (m, n), seed.wrapping_add(layer_idx))?;
                        let tid = self.params.add(format!("t.{}", u.name), t.into_matrices(), ParamRole::Transform, ParamKind::Transform);
                        (tid, true)
                    }
                };
                layer_idx += 1;
                ConvWeight::Transformed { w2d: wid, transform: tid, per_filter }
            };
            let blk = &mut self.stages[s][b];
            let u = if c < blk.convs.len() { &mut blk.convs[c] } else { blk.down.as_mut().expect("down") };
            u.weight = new_weight;
            if let Some(bn) = &u.bn {
                for (id, suffix) in [(bn.ids.gamma, "gamma"), (bn.ids.beta, "beta"), (bn.ids.mean, "mean"), (bn.ids.var, "var")] {
                    let rec = source.require(&format!("{}.bn.{suffix}", u.name))?;
                    self.params.assign(id, Tensor::from_vec(&[rec.values.len()], rec.values.clone())?)?;
                }
            }
        }
        self.learn_t = Some(sharing);
        self.set_regime(FinetuneRegime::Whole)
    }
}

/// Sets the trainable mask and batch-norm policy of `g` for regime `r`.
pub fn apply_regime<S: Real>(mut g: NetworkGraph<S>, r: FinetuneRegime) -> Result<NetworkGraph<S>> {
    g.set_regime(r)?;
    Ok(g)
}
