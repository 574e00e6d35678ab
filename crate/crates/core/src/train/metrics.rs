use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::models::FinetuneRegime;

/// Counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            bail!(Shape, "{} counts for {classes} classes", counts.len());
        }
        Ok(Self { classes, counts })
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, truth: u32, pred: u32) -> Result<()> {
        let (t, p) = (truth as usize, pred as usize);
        if t >= self.classes || p >= self.classes {
            bail!(InvalidInput, "label pair ({truth}, {pred}) out of range for {} classes", self.classes);
        }
        self.counts[t * self.classes + p] += 1;
        Ok(())
    }

    pub fn extend(&mut self, truth: &[u32], pred: &[u32]) -> Result<()> {
        if truth.len() != pred.len() {
            bail!(Shape, "{} targets vs {} predictions", truth.len(), pred.len());
        }
        for (&t, &p) in truth.iter().zip(pred) {
            if t != super::loss::IGNORE_LABEL {
                self.add(t, p)?;
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn top1(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hit: u64 = (0..self.classes).map(|c| self.get(c, c)).sum();
        hit as f64 / total as f64
    }

    /// `TP / (TP + FP + FN)`, or `None` when the union is empty.
    pub fn iou(&self, c: usize) -> Option<f64> {
        let tp = self.get(c, c);
        let fn_: u64 = (0..self.classes).filter(|&p| p != c).map(|p| self.get(c, p)).sum();
        let fp: u64 = (0..self.classes).filter(|&t| t != c).map(|t| self.get(t, c)).sum();
        let union = tp + fp + fn_;
        (union > 0).then(|| tp as f64 / union as f64)
    }

    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.classes).map(|c| self.iou(c)).collect()
    }

    /// Mean IoU over classes with a nonempty union.
    pub fn miou(&self) -> f64 {
        let ious: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        if ious.is_empty() {
            0.0
        } else {
            ious.iter().sum::<f64>() / ious.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub top1: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    /// Mean training loss per epoch; empty for evaluation-only reports.
    pub loss_curve: Vec<f64>,
    pub seed: u64,
    pub regime: Option<FinetuneRegime>,
    /// Seconds; filled by callers with a clock.
    pub wall_time: Option<f64>,
    pub confusion: ConfusionMatrix,
}

impl MetricReport {
    pub fn from_confusion(confusion: ConfusionMatrix, seed: u64, regime: Option<FinetuneRegime>) -> Self {
        Self {
            top1: confusion.top1(),
            per_class_iou: confusion.per_class_iou(),
            miou: confusion.miou(),
            loss_curve: Vec::new(),
            seed,
            regime,
            wall_time: None,
            confusion,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_hand_computed() {
        // truth 0: 3 right, 1 wrong; truth 1: 2 right, 2 wrong
        let cm = ConfusionMatrix::from_counts(2, vec![3, 1, 2, 2]).unwrap();
        assert_eq!(cm.top1(), 5.0 / 8.0);
        assert_eq!(cm.iou(0), Some(3.0 / 6.0));
        assert_eq!(cm.iou(1), Some(2.0 / 5.0));
        assert_eq!(cm.miou(), (0.5 + 0.4) / 2.0);
    }

    #[test]
    fn zero_union_class_is_excluded() {
        let cm = ConfusionMatrix::from_counts(3, vec![2, 0, 0, 0, 1, 0, 0, 0, 0]).unwrap();
        assert_eq!(cm.per_class_iou(), vec![Some(1.0), Some(1.0), None]);
        assert_eq!(cm.miou(), 1.0);
    }
}
