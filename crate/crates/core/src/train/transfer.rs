use alloc::vec::Vec;

use super::loops::{evaluate, train, Dataset, TrainConfig};
use super::metrics::MetricReport;
use super::optim::OptimizerConfig;
use super::synth::{gen_synthetic_2d, gen_synthetic_3d, Synth2dConfig, Synth3dConfig};
use crate::archive::WeightArchive;
use crate::error::{bail, Result};
use crate::inflation::{default_transform, inflate_network, InflationPolicy};
use crate::models::{build, ArchKind, ArchSpec, Depth, FinetuneRegime, LoadScope, NetworkGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub classes: usize,
    pub per_class_train: usize,
    pub per_class_val: usize,
    pub synth: Synth2dConfig,
    pub width_mult: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            per_class_train: 150,
            per_class_val: 20,
            synth: Synth2dConfig::default(),
            width_mult: 0.125,
            train: TrainConfig {
                optim: OptimizerConfig { lr0: 0.05, epochs: 30, weight_decay: 1e-4, ..OptimizerConfig::default() },
                batch_size: 16,
                augment: None,
            },
            seed: 7,
        }
    }
}

impl PretrainConfig {
    pub fn spec(&self) -> ArchSpec {
        ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 1, self.classes).planar().with_width(self.width_mult).with_seed(self.seed)
    }
}

/// Trains the planar tiny classifier on silhouettes. Returns the network and
/// its held-out report.
pub fn pretrain_2d(cfg: &PretrainConfig) -> Result<(NetworkGraph<f32>, MetricReport)> {
    let (images, labels) = gen_synthetic_2d(cfg.classes, cfg.per_class_train, &cfg.synth, cfg.seed)?;
    let train_set = Dataset::images(images, labels, cfg.classes)?;
    let (vi, vl) = gen_synthetic_2d(cfg.classes, cfg.per_class_val, &cfg.synth, cfg.seed ^ 0x5EED)?;
    let val = Dataset::images(vi, vl, cfg.classes)?;
    let mut g = build::<f32>(&cfg.spec())?;
    let mut tc = cfg.train.clone();
    tc.optim.seed = cfg.seed;
    let fit = train(&mut g, &train_set, FinetuneRegime::Whole, &tc)?;
    let mut report = evaluate(&mut g, &val, 64)?;
    report.loss_curve = fit.loss_curve;
    report.seed = cfg.seed;
    Ok((g, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub seeds: Vec<u64>,
    pub per_class: usize,
    pub test_per_class: usize,
    pub synth: Synth3dConfig,
    pub voxel_size: f64,
    pub transfer_regime: FinetuneRegime,
    pub scratch_regime: FinetuneRegime,
    pub train: TrainConfig,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            per_class: 32,
            test_per_class: 60,
            synth: Synth3dConfig { points: 384, ..Synth3dConfig::default() },
            voxel_size: 0.2,
            transfer_regime: FinetuneRegime::IoBn,
            scratch_regime: FinetuneRegime::IoBn,
            train: TrainConfig {
                optim: OptimizerConfig { lr0: 0.05, epochs: 30, ..OptimizerConfig::default() },
                batch_size: 8,
                augment: Some(Default::default()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub pretrained: Vec<MetricReport>,
    pub scratch: Vec<MetricReport>,
}

impl TransferOutcome {
    pub fn mean(reports: &[MetricReport]) -> f64 {
        reports.iter().map(|r| r.top1).sum::<f64>() / reports.len().max(1) as f64
    }

    pub fn pretrained_mean(&self) -> f64 {
        Self::mean(&self.pretrained)
    }

    pub fn scratch_mean(&self) -> f64 {
        Self::mean(&self.scratch)
    }

    /// Seeds where the inflated network is strictly better.
    pub fn wins(&self) -> usize {
        self.pretrained.iter().zip(&self.scratch).filter(|(p, s)| p.top1 > s.top1).count()
    }
}

/// Inflates `source` into a fresh volumetric tiny classifier of the same
/// width, keeping the seeded input and output layers.
pub fn inflated_student(source: &WeightArchive, spec: &ArchSpec) -> Result<NetworkGraph<f32>> {
    let mut g = build::<f32>(spec)?;
    let inflated = inflate_network(source, &g, &InflationPolicy::uniform(default_transform(3)))?;
    g.load_archive(&inflated, LoadScope::Backbone)?;
    Ok(g)
}

fn test_split(classes: usize, cfg: &TransferConfig) -> Result<Dataset> {
    let (tc, tl) = gen_synthetic_3d(classes, cfg.test_per_class, &cfg.synth, 0xC0FFEE)?;
    Dataset::classification(tc, tl, classes, cfg.voxel_size)
}

/// Few-shot training split, student spec and schedule of one seed.
fn seed_setup(source_spec: &ArchSpec, cfg: &TransferConfig, seed: u64) -> Result<(Dataset, ArchSpec, TrainConfig)> {
    let classes = source_spec.classes;
    let (clouds, labels) = gen_synthetic_3d(classes, cfg.per_class, &cfg.synth, 1000 + seed)?;
    let data = Dataset::classification(clouds, labels, classes, cfg.voxel_size)?;
    let spec = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 3, classes).with_width(source_spec.width_mult).with_seed(seed);
    let mut tc = cfg.train.clone();
    tc.optim.seed = seed;
    Ok((data, spec, tc))
}

fn fit_and_score(g: &mut NetworkGraph<f32>, data: &Dataset, test: &Dataset, regime: FinetuneRegime, tc: &TrainConfig, seed: u64) -> Result<MetricReport> {
    let fit = train(g, data, regime, tc)?;
    let mut r = evaluate(g, test, 32)?;
    r.loss_curve = fit.loss_curve;
    r.seed = seed;
    Ok(r)
}

/// Per seed: a seeded few-shot split, then the inflated network trained
/// under `transfer_regime` against an identically built random network
/// trained under `scratch_regime`. Both are scored on the same test split.
pub fn run_transfer(source: &WeightArchive, source_spec: &ArchSpec, cfg: &TransferConfig) -> Result<TransferOutcome> {
    if cfg.seeds.is_empty() {
        bail!(InvalidInput, "transfer experiment needs at least one seed");
    }
    let test = test_split(source_spec.classes, cfg)?;
    let mut out = TransferOutcome { pretrained: Vec::new(), scratch: Vec::new() };
    for &seed in &cfg.seeds {
        let (data, spec, tc) = seed_setup(source_spec, cfg, seed)?;
        let mut student = inflated_student(source, &spec)?;
        out.pretrained.push(fit_and_score(&mut student, &data, &test, cfg.transfer_regime, &tc, seed)?);
        let mut scratch = build::<f32>(&spec)?;
        out.scratch.push(fit_and_score(&mut scratch, &data, &test, cfg.scratch_regime, &tc, seed)?);
    }
    Ok(out)
}

/// The scratch arm of [`run_transfer`] alone, under `regime`.
pub fn run_scratch(source_spec: &ArchSpec, cfg: &TransferConfig, regime: FinetuneRegime) -> Result<Vec<MetricReport>> {
    let test = test_split(source_spec.classes, cfg)?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let (data, spec, tc) = seed_setup(source_spec, cfg, seed)?;
            fit_and_score(&mut build::<f32>(&spec)?, &data, &test, regime, &tc, seed)
        })
        .collect()
}
