use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ArchKind, ArchSpec, BnUnit, Decoder, Dims, FinetuneRegime, Head, LinearUnit, NetworkGraph, ResBlock, Section};
use super::ConvUnit;
use crate::error::{bail, Result};
use crate::param::{ParamKind, ParamStore};
use crate::real::Real;
use crate::tape::{BnIds, ConvWeight};
use crate::tensor::Tensor;

struct Builder<'a, S> {
    spec: &'a ArchSpec,
    params: ParamStore<S>,
    rng: ChaCha8Rng,
}

impl<'a, S: Real> Builder<'a, S> {
    fn new(spec: &'a ArchSpec) -> Self {
        Self { spec, params: ParamStore::new(), rng: ChaCha8Rng::seed_from_u64(spec.seed) }
    }

    fn uniform(&mut self, dims: &[usize], bound: f64) -> Tensor<S> {
        if self.spec.shape_only {
            return Tensor::zeros(dims);
        }
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| S::lit(self.rng.random_range(-bound..bound))).collect();
        Tensor::from_vec(dims, data).expect("dims")
    }

    fn bn(&mut self, prefix: &str, ch: usize, section: Section) -> BnUnit {
        let role = section.role();
        let mut add = |suffix: &str, v: f64, kind| self.params.add(format!("{prefix}.{suffix}"), Tensor::filled(&[ch], S::lit(v)), role, kind);
        let ids = BnIds {
            gamma: add("gamma", 1.0, ParamKind::BnGamma),
            beta: add("beta", 0.0, ParamKind::BnBeta),
            mean: add("mean", 0.0, ParamKind::RunningMean),
            var: add("var", 1.0, ParamKind::RunningVar),
        };
        BnUnit { ids, section }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: String, section: Section, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, bn: bool, relu: bool) -> ConvUnit {
        let mut dims = vec![out_ch, in_ch, kernel, kernel];
        let mut fan = in_ch * kernel * kernel;
        if self.spec.dims == Dims::Volumetric {
            dims.push(kernel);
            fan *= kernel;
        }
        let w = self.uniform(&dims, sqrt(6.0 / fan as f64));
        let weight = ConvWeight::Param(self.params.add(format!("{name}.weight"), w, section.role(), ParamKind::ConvWeight));
        let bn = bn.then(|| self.bn(&format!("{name}.bn"), out_ch, section));
        ConvUnit { name, section, weight, in_ch, out_ch, kernel, stride, bn, relu }
    }

    fn deconv(&mut self, name: String, in_ch: usize, out_ch: usize) -> ConvUnit {
        let w = self.uniform(&[out_ch, in_ch, 2, 2, 2], sqrt(6.0 / in_ch as f64));
        let weight = ConvWeight::Param(self.params.add(format!("{name}.weight"), w, Section::Output.role(), ParamKind::ConvWeight));
        ConvUnit { name, section: Section::Output, weight, in_ch, out_ch, kernel: 2, stride: 2, bn: None, relu: false }
    }

    fn linear(&mut self, name: &str, in_f: usize, out_f: usize, bias: bool) -> LinearUnit {
        let w = self.uniform(&[out_f, in_f], sqrt(1.0 / in_f as f64));
        let role = Section::Output.role();
        let weight = self.params.add(format!("{name}.weight"), w, role, ParamKind::LinearWeight);
        let bias = bias.then(|| self.params.add(format!("{name}.bias"), Tensor::zeros(&[out_f]), role, ParamKind::Bias));
        LinearUnit { name: name.into(), weight, bias, in_f, out_f }
    }

    /// Basic block (`planes == out`) or bottleneck (`1x1, 3x3, 1x1`), with a
    /// `1x1` projection shortcut whenever shape changes.
    fn block(&mut self, name: String, section: Section, in_ch: usize, out_ch: usize, stride: usize) -> ResBlock {
        let convs = if self.spec.depth.bottleneck() {
            let planes = (out_ch / 4).max(1);
            vec![
                self.conv(format!("{name}.conv1"), section, in_ch, planes, 1, 1, true, true),
                self.conv(format!("{name}.conv2"), section, planes, planes, 3, stride, true, true),
                self.conv(format!("{name}.conv3"), section, planes, out_ch, 1, 1, true, false),
            ]
        } else {
            vec![
                self.conv(format!("{name}.conv1"), section, in_ch, out_ch, 3, stride, true, true),
                self.conv(format!("{name}.conv2"), section, out_ch, out_ch, 3, 1, true, false),
            ]
        };
        let down = (stride != 1 || in_ch != out_ch).then(|| self.conv(format!("{name}.down"), section, in_ch, out_ch, 1, stride, true, false));
        ResBlock { name, convs, down }
    }

    fn stages(&mut self) -> Vec<Vec<ResBlock>> {
        let counts = self.spec.depth.blocks();
        (0..4)
            .map(|i| {
                let (in_ch, out_ch) = self.spec.stage_dims(i);
                (0..counts[i])
                    .map(|j| {
                        let (cin, stride) = if j == 0 { (in_ch, 2) } else { (out_ch, 1) };
                        self.block(format!("layer{}.block{j}", i + 1), Section::Backbone, cin, out_ch, stride)
                    })
                    .collect()
            })
            .collect()
    }

    fn three_conv_input(&mut self) -> Vec<ConvUnit> {
        let w = self.spec.width(64);
        let d = self.spec.in_dim;
        vec![
            self.conv("input.conv1".into(), Section::Input, d, w, 3, 1, true, true),
            self.conv("input.conv2".into(), Section::Input, w, w, 3, 1, true, true),
            self.conv("input.conv3".into(), Section::Input, w, w, 3, 2, true, true),
        ]
    }

    fn linear_input(&mut self, out_ch: usize) -> Vec<ConvUnit> {
        vec![self.conv("input.conv1".into(), Section::Input, self.spec.in_dim, out_ch, 3, 1, true, false)]
    }

    /// Decoder stage `d` joins the upsampled features with encoder stage
    /// `3 - d` (0 = input layer).
    fn seg_head(&mut self, simple: bool) -> Head {
        let s = self.spec;
        let enc = [s.stage_dims(0).0, s.stage_dims(0).1, s.stage_dims(1).1, s.stage_dims(2).1, s.stage_dims(3).1];
        let mut ups = Vec::new();
        let mut decoders = Vec::new();
        let mut cur = enc[4];
        for d in 0..4 {
            let skip = enc[3 - d];
            let out = if d < 3 { enc[3 - d] } else { enc[1] };
            ups.push(self.deconv(format!("up{}", d + 1), cur, cur));
            let cin = skip + cur;
            let name = format!("decode{}", d + 1);
            decoders.push(if simple {
                Decoder::Conv(self.conv(format!("{name}.conv"), Section::Output, cin, out, 3, 1, true, false))
            } else {
                Decoder::Blocks(vec![
                    self.block(format!("{name}.block0"), Section::Output, cin, out, 1),
                    self.block(format!("{name}.block1"), Section::Output, out, out, 1),
                ])
            });
            cur = out;
        }
        let classifier = self.linear("head.classifier", cur, s.classes, true);
        Head::Seg { ups, decoders, classifier }
    }

    fn finish(self, input: Vec<ConvUnit>, stages: Vec<Vec<ResBlock>>, head: Head) -> NetworkGraph<S> {
        NetworkGraph {
            spec: self.spec.clone(),
            params: self.params,
            input,
            stages,
            head,
            regime: FinetuneRegime::Whole,
            learn_t: None,
            stubs: Vec::new(),
        }
    }
}

#[inline]
fn sqrt(v: f64) -> f64 {
    num_traits::Float::sqrt(v)
}

fn validate(spec: &ArchSpec) -> Result<()> {
    if spec.in_dim == 0 || spec.classes == 0 {
        bail!(InvalidInput, "input width and class count must be positive");
    }
    if !(spec.width_mult.is_finite() && spec.width_mult > 0.0) {
        bail!(InvalidInput, "width multiplier must be positive");
    }
    if spec.kind.is_seg() && spec.dims == Dims::Planar {
        bail!(Unsupported, "segmentation graphs are volumetric only");
    }
    Ok(())
}

fn expect_kind(spec: &ArchSpec, kinds: &[ArchKind]) -> Result<()> {
    validate(spec)?;
    if !kinds.contains(&spec.kind) {
        bail!(Unsupported, "builder does not produce {:?}", spec.kind);
    }
    Ok(())
}

/// Three-conv input layer, four residual stages, and
/// `pool -> fc1 -> bn -> relu -> fc2`. The hidden width is `1024 * width_mult`.
pub fn build_cls<S: Real>(spec: &ArchSpec) -> Result<NetworkGraph<S>> {
    expect_kind(spec, &[ArchKind::ResnetCls])?;
    let mut b = Builder::new(spec);
    let input = b.three_conv_input();
    let stages = b.stages();
    let hidden = spec.width(1024);
    let fc1 = b.linear("head.fc1", spec.stage_dims(3).1, hidden, true);
    let bn = b.bn("head.bn1", hidden, Section::Output);
    let fc2 = b.linear("head.fc2", hidden, spec.classes, true);
    Ok(b.finish(input, stages, Head::Cls { fc1, bn, fc2 }))
}

/// Encoder of [`build_cls`] plus a four-stage U-Net decoder
/// (`deconv k=2 s=2 -> concat -> 2 residual blocks`) and a per-voxel linear
/// classifier.
pub fn build_seg<S: Real>(spec: &ArchSpec) -> Result<NetworkGraph<S>> {
    expect_kind(spec, &[ArchKind::ResnetSeg])?;
    let mut b = Builder::new(spec);
    let input = b.three_conv_input();
    let stages = b.stages();
    let head = b.seg_head(false);
    Ok(b.finish(input, stages, head))
}

/// Single `conv + bn` input layer; classification head `pool -> fc -> bn`,
/// segmentation decoder stages of one `conv + bn` each.
pub fn build_linear_io<S: Real>(spec: &ArchSpec) -> Result<NetworkGraph<S>> {
    expect_kind(spec, &[ArchKind::LinearIoCls, ArchKind::LinearIoSeg])?;
    let mut b = Builder::new(spec);
    let input = b.linear_input(spec.width(64));
    let stages = b.stages();
    let head = if spec.kind == ArchKind::LinearIoSeg {
        b.seg_head(true)
    } else {
        let fc = b.linear("head.fc", spec.stage_dims(3).1, spec.classes, false);
        let bn = b.bn("head.bn", spec.classes, Section::Output);
        Head::LinearCls { fc, bn }
    };
    Ok(b.finish(input, stages, head))
}

/// `conv(k=3) + bn -> pool -> fc -> bn` with no backbone; the conv widens to
/// the stage-4 width of the matching ResNet.
pub fn build_linear_net_no_backbone<S: Real>(spec: &ArchSpec) -> Result<NetworkGraph<S>> {
    expect_kind(spec, &[ArchKind::LinearBaseline])?;
    let mut b = Builder::new(spec);
    let width = spec.stage_dims(3).1;
    let input = b.linear_input(width);
    let fc = b.linear("head.fc", width, spec.classes, false);
    let bn = b.bn("head.bn", spec.classes, Section::Output);
    Ok(b.finish(input, Vec::new(), Head::LinearCls { fc, bn }))
}

/// Dispatches on `spec.kind`.
pub fn build<S: Real>(spec: &ArchSpec) -> Result<NetworkGraph<S>> {
    match spec.kind {
        ArchKind::ResnetCls => build_cls(spec),
        ArchKind::ResnetSeg => build_seg(spec),
        ArchKind::LinearIoCls | ArchKind::LinearIoSeg => build_linear_io(spec),
        ArchKind::LinearBaseline => build_linear_net_no_backbone(spec),
    }
}
