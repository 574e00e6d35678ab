use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::augment::{augment, AugmentConfig};
use super::loss::{argmax_rows, cross_entropy, IGNORE_LABEL};
use super::metrics::{ConfusionMatrix, MetricReport};
use super::optim::{sgd_step, OptimizerConfig, SgdState};
use super::synth::sample_rng;
use crate::error::{bail, Result};
use crate::grid::Image;
use crate::models::{Dims, FinetuneRegime, NetInput, NetworkGraph};
use crate::ops::conv2d::PlanarShape;
use crate::real::Real;
use crate::tape::Tape;
use crate::tensor::Matrix;
use crate::voxel::{voxelize, Coord, CoordSet, PointCloud, SparseVoxelTensor};

/// Labelled samples in either modality.
#[derive(Debug, Clone)]
pub enum Dataset {
    /// One-channel-or-more images with one label each.
    Images { images: Vec<Image<f32>>, labels: Vec<u32>, classes: usize },
    /// Clouds with one label each (`labels = Some`) or per-point labels.
    Clouds { clouds: Vec<PointCloud>, labels: Option<Vec<u32>>, classes: usize, voxel_size: f64 },
}

impl Dataset {
    pub fn images(images: Vec<Image<f32>>, labels: Vec<u32>, classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            bail!(InvalidInput, "{} images with {} labels", images.len(), labels.len());
        }
        check_labels(&labels, classes)?;
        if let Some(first) = images.first() {
            if images.iter().any(|i| (i.channels, i.height, i.width) != (first.channels, first.height, first.width)) {
                bail!(Shape, "images differ in shape");
            }
        }
        Ok(Self::Images { images, labels, classes })
    }

    pub fn classification(clouds: Vec<PointCloud>, labels: Vec<u32>, classes: usize, voxel_size: f64) -> Result<Self> {
        if clouds.len() != labels.len() {
            bail!(InvalidInput, "{} clouds with {} labels", clouds.len(), labels.len());
        }
        check_labels(&labels, classes)?;
        check_voxel(voxel_size)?;
        Ok(Self::Clouds { clouds, labels: Some(labels), classes, voxel_size })
    }

    pub fn segmentation(clouds: Vec<PointCloud>, classes: usize, voxel_size: f64) -> Result<Self> {
        for (i, c) in clouds.iter().enumerate() {
            match c.labels() {
                Some(l) => check_labels(l, classes)?,
                None => bail!(InvalidInput, "cloud {i} has no point labels"),
            }
        }
        check_voxel(voxel_size)?;
        Ok(Self::Clouds { clouds, labels: None, classes, voxel_size })
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Images { images, .. } => images.len(),
            Self::Clouds { clouds, .. } => clouds.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> usize {
        match self {
            Self::Images { classes, .. } | Self::Clouds { classes, .. } => *classes,
        }
    }

    pub fn is_seg(&self) -> bool {
        matches!(self, Self::Clouds { labels: None, .. })
    }

    /// Subset by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            Self::Images { images, labels, classes } => Self::Images {
                images: idx.iter().map(|&i| images[i].clone()).collect(),
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Self::Clouds { clouds, labels, classes, voxel_size } => Self::Clouds {
                clouds: idx.iter().map(|&i| clouds[i].clone()).collect(),
                labels: labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
                classes: *classes,
                voxel_size: *voxel_size,
            },
        }
    }

    fn check_graph<S: Real>(&self, g: &NetworkGraph<S>) -> Result<()> {
        let spec = g.spec();
        let planar = matches!(self, Self::Images { .. });
        if planar != (spec.dims == Dims::Planar) {
            bail!(InvalidInput, "dataset modality does not match the graph");
        }
        if self.is_seg() != spec.kind.is_seg() {
            bail!(InvalidInput, "dataset task does not match the graph");
        }
        if self.classes() != spec.classes {
            bail!(InvalidInput, "dataset has {} classes, graph predicts {}", self.classes(), spec.classes);
        }
        Ok(())
    }
}

fn check_labels(labels: &[u32], classes: usize) -> Result<()> {
    if let Some(l) = labels.iter().find(|&&l| l as usize >= classes) {
        bail!(InvalidInput, "label {l} out of range for {classes} classes");
    }
    Ok(())
}

fn check_voxel(v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!(InvalidInput, "voxel size must be positive");
    }
    Ok(())
}

/// Level-0 voxel index of every point plus the point labels, per sample.
struct PointCells {
    cells: Vec<[i32; 3]>,
    labels: Vec<u32>,
}

struct Batch {
    input: NetInput<f32>,
    sample_labels: Option<Vec<u32>>,
    points: Vec<PointCells>,
}

fn planar_batch(images: &[&Image<f32>]) -> NetInput<f32> {
    let first = images[0];
    let (h, w, c) = (first.height, first.width, first.channels);
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for img in images {
        for y in 0..h {
            for x in 0..w {
                data.extend((0..c).map(|ch| img.get(ch, y, x)));
            }
        }
    }
    let shape = PlanarShape { batch: images.len(), height: h, width: w };
    NetInput::Planar { feats: Matrix::from_vec(shape.pixels(), c, data).expect("consistent size"), shape }
}

/// Voxelizes and collates `clouds` into one batch.
pub fn collate_clouds(clouds: &[PointCloud], voxel_size: f64) -> Result<(SparseVoxelTensor<f32>, Vec<Vec<[i32; 3]>>)> {
    let mut tensors = Vec::with_capacity(clouds.len());
    let mut cells = Vec::with_capacity(clouds.len());
    for pc in clouds {
        let (t, map) = voxelize(pc, voxel_size)?;
        let coords = t.coords().coords();
        cells.push(map.forward().iter().map(|&v| coords[v as usize].ijk).collect());
        tensors.push(t);
    }
    Ok((SparseVoxelTensor::collate(&tensors)?, cells))
}

fn make_batch(data: &Dataset, idx: &[usize], aug: Option<(&AugmentConfig, u64, u64)>) -> Result<Batch> {
    match data {
        Dataset::Images { images, labels, .. } => {
            let imgs: Vec<&Image<f32>> = idx.iter().map(|&i| &images[i]).collect();
            Ok(Batch { input: planar_batch(&imgs), sample_labels: Some(idx.iter().map(|&i| labels[i]).collect()), points: Vec::new() })
        }
        Dataset::Clouds { clouds, labels, voxel_size, .. } => {
            let mut picked = Vec::with_capacity(idx.len());
            for &i in idx {
                picked.push(match aug {
                    Some((cfg, seed, epoch)) => augment(&clouds[i], cfg, &mut sample_rng(seed, 1000 + epoch, i as u64))?,
                    None => clouds[i].clone(),
                });
            }
            let (tensor, cells) = collate_clouds(&picked, *voxel_size)?;
            let points = if labels.is_none() {
                cells
                    .into_iter()
                    .zip(&picked)
                    .map(|(cells, pc)| PointCells { cells, labels: pc.labels().expect("checked").to_vec() })
                    .collect()
            } else {
                Vec::new()
            };
            Ok(Batch {
                input: NetInput::Sparse(tensor),
                sample_labels: labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
                points,
            })
        }
    }
}

fn cell_at(ijk: [i32; 3], level: u32) -> [i32; 3] {
    let f = 1i32 << level;
    ijk.map(|v| v.div_euclid(f))
}

/// Majority point label of every output site; ties go to the smallest id.
fn site_targets(points: &[PointCells], out: &CoordSet, classes: usize) -> Vec<u32> {
    let level = out.stride_level();
    let tallies: Vec<BTreeMap<[i32; 3], Vec<u32>>> = points
        .iter()
        .map(|p| {
            let mut m: BTreeMap<[i32; 3], Vec<u32>> = BTreeMap::new();
            for (&c, &l) in p.cells.iter().zip(&p.labels) {
                m.entry(cell_at(c, level)).or_insert_with(|| vec![0; classes])[l as usize] += 1;
            }
            m
        })
        .collect();
    out.coords()
        .iter()
        .map(|c| match tallies.get(c.batch as usize).and_then(|m| m.get(&c.ijk)) {
            Some(counts) => {
                let mut best = 0;
                for (k, &n) in counts.iter().enumerate() {
                    if n > counts[best] {
                        best = k;
                    }
                }
                best as u32
            }
            None => IGNORE_LABEL,
        })
        .collect()
}

fn targets(batch: &Batch, out: Option<&CoordSet>, classes: usize) -> Result<Vec<u32>> {
    match (&batch.sample_labels, out) {
        (Some(l), _) => Ok(l.clone()),
        (None, Some(out)) => Ok(site_targets(&batch.points, out, classes)),
        (None, None) => bail!(State, "segmentation batch produced no output sites"),
    }
}

/// Point-level scoring of per-site predictions.
fn score_points(batch: &Batch, out: &CoordSet, preds: &[u32], cm: &mut ConfusionMatrix) -> Result<()> {
    let level = out.stride_level();
    for (b, p) in batch.points.iter().enumerate() {
        for (&c, &l) in p.cells.iter().zip(&p.labels) {
            let site = Coord::new(b as u32, cell_at(c, level));
            match out.index_of(&site) {
                Some(i) => cm.add(l, preds[i])?,
                None => bail!(Coordinate, "point cell {:?} has no output site", site.ijk),
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optim: OptimizerConfig,
    pub batch_size: usize,
    /// Point-cloud augmentation; ignored for images.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { optim: OptimizerConfig::default(), batch_size: 8, augment: Some(AugmentConfig::default()) }
    }
}

fn batches(order: &[usize], size: usize, drop_singleton: bool) -> impl Iterator<Item = &[usize]> {
    order.chunks(size).filter(move |c| !(drop_singleton && c.len() == 1 && order.len() > 1))
}

/// Fits `g` under `regime`. The returned report carries the per-epoch mean
/// loss and the training-mode metrics of the last epoch.
pub fn train(g: &mut NetworkGraph<f32>, data: &Dataset, regime: FinetuneRegime, cfg: &TrainConfig) -> Result<MetricReport> {
    cfg.optim.validate()?;
    if cfg.batch_size == 0 {
        bail!(InvalidInput, "batch size must be positive");
    }
    if data.is_empty() {
        bail!(InvalidInput, "empty training set");
    }
    data.check_graph(g)?;
    g.set_regime(regime)?;
    let classes = data.classes();
    let seed = cfg.optim.seed;
    // A lone sample would collapse batch statistics in the classifier head.
    let drop_singleton = !data.is_seg();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let per_epoch = batches(&order, cfg.batch_size, drop_singleton).count();
    let total = (per_epoch * cfg.optim.epochs) as f64;
    let mut state = SgdState::new();
    let mut curve = Vec::with_capacity(cfg.optim.epochs);
    let mut last = ConfusionMatrix::new(classes);
    let mut step = 0usize;
    for epoch in 0..cfg.optim.epochs {
        order.sort_unstable();
        order.shuffle(&mut sample_rng(seed, 2000, epoch as u64));
        let mut cm = ConfusionMatrix::new(classes);
        let (mut loss_sum, mut weight) = (0.0, 0usize);
        for chunk in batches(&order, cfg.batch_size, drop_singleton) {
            let batch = make_batch(data, chunk, cfg.augment.as_ref().map(|a| (a, seed, epoch as u64)))?;
            let mut tape = Tape::new();
            let f = g.forward(&mut tape, &batch.input, true)?;
            let logits = tape.value(f.logits).feats.clone();
            let t = targets(&batch, f.coords.as_deref(), classes)?;
            let (loss, grad) = cross_entropy(&logits, &t)?;
            cm.extend(&t, &argmax_rows(&logits))?;
            g.params_mut().zero_grad();
            tape.backward(g.params_mut(), f.logits, grad)?;
            sgd_step(g.params_mut(), &mut state, &cfg.optim, step as f64 / total)?;
            step += 1;
            loss_sum += loss * chunk.len() as f64;
            weight += chunk.len();
        }
        curve.push(loss_sum / weight.max(1) as f64);
        last = cm;
    }
    let mut report = MetricReport::from_confusion(last, seed, Some(regime));
    report.loss_curve = curve;
    Ok(report)
}

/// Evaluation-mode metrics; segmentation is scored per point.
pub fn evaluate(g: &mut NetworkGraph<f32>, data: &Dataset, batch_size: usize) -> Result<MetricReport> {
    if batch_size == 0 {
        bail!(InvalidInput, "batch size must be positive");
    }
    data.check_graph(g)?;
    let classes = data.classes();
    let mut cm = ConfusionMatrix::new(classes);
    let order: Vec<usize> = (0..data.len()).collect();
    for chunk in order.chunks(batch_size) {
        let batch = make_batch(data, chunk, None)?;
        let (logits, coords) = g.infer(&batch.input)?;
        let preds = argmax_rows(&logits);
        match (&batch.sample_labels, coords) {
            (Some(l), _) => cm.extend(l, &preds)?,
            (None, Some(out)) => score_points(&batch, &out, &preds, &mut cm)?,
            (None, None) => bail!(State, "segmentation graph produced no output sites"),
        }
    }
    Ok(MetricReport::from_confusion(cm, 0, Some(g.regime())))
}

/// Per-point predictions for one cloud.
pub fn predict_points(g: &mut NetworkGraph<f32>, pc: &PointCloud, voxel_size: f64) -> Result<Vec<u32>> {
    let (tensor, cells) = collate_clouds(core::slice::from_ref(pc), voxel_size)?;
    let (logits, coords) = g.infer(&NetInput::Sparse(tensor))?;
    let Some(out) = coords else {
        bail!(InvalidInput, "graph is not a segmentation network");
    };
    let preds = argmax_rows(&logits);
    let level = out.stride_level();
    cells[0]
        .iter()
        .map(|&c| match out.index_of(&Coord::new(0, cell_at(c, level))) {
            Some(i) => Ok(preds[i]),
            None => bail!(Coordinate, "point cell has no output site"),
        })
        .collect()
}

/// Images as one planar network input.
pub fn image_batch(images: &[Image<f32>]) -> Result<NetInput<f32>> {
    if images.is_empty() {
        bail!(InvalidInput, "no images");
    }
    let refs: Vec<&Image<f32>> = images.iter().collect();
    Ok(planar_batch(&refs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_targets_take_majority() {
        let points = vec![PointCells { cells: vec![[0, 0, 0], [1, 1, 1], [2, 0, 0], [3, 1, 0]], labels: vec![2, 1, 0, 0] }];
        let out = CoordSet::new(vec![Coord::new(0, [0, 0, 0]), Coord::new(0, [1, 0, 0])], 1).unwrap();
        // Cell (0,0,0) holds labels {2, 1}: tie, smallest wins.
        assert_eq!(site_targets(&points, &out, 3), vec![1, 0]);
    }
}
