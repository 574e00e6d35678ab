use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::voxel::PointCloud;

/// Random isotropic scale, global translation and clipped per-point jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub scale: (f64, f64),
    /// Per-axis translation drawn from `[-t, t]`.
    pub translate: f64,
    pub jitter_std: f64,
    pub jitter_clip: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { scale: (0.9, 1.1), translate: 0.1, jitter_std: 0.01, jitter_clip: 0.05 }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self { scale: (1.0, 1.0), translate: 0.0, jitter_std: 0.0, jitter_clip: 0.0 }
    }
}

fn draw<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Applies the same scale and translation to every point and independent
/// jitter per coordinate. Labels and explicit features are kept.
pub fn augment<R: Rng>(pc: &PointCloud, cfg: &AugmentConfig, rng: &mut R) -> Result<PointCloud> {
    let s = draw(rng, cfg.scale.0, cfg.scale.1);
    let t = [(); 3].map(|_| draw(rng, -cfg.translate, cfg.translate));
    let jitter = (cfg.jitter_std > 0.0).then(|| Normal::new(0.0, cfg.jitter_std).expect("positive std"));
    let positions: Vec<[f64; 3]> = pc
        .positions()
        .iter()
        .map(|p| {
            [0, 1, 2].map(|a| {
                let j = jitter.as_ref().map_or(0.0, |n| n.sample(rng).clamp(-cfg.jitter_clip, cfg.jitter_clip));
                p[a] * s + t[a] + j
            })
        })
        .collect();
    pc.with_positions(positions)
}

/// Draws the scale factor alone, as [`augment`] would.
pub fn draw_scale<R: Rng>(cfg: &AugmentConfig, rng: &mut R) -> f64 {
    draw(rng, cfg.scale.0, cfg.scale.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud() -> PointCloud {
        PointCloud::new(vec![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]], None, Some(vec![1, 2])).unwrap()
    }

    #[test]
    fn identity_config_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = augment(&cloud(), &AugmentConfig::identity(), &mut rng).unwrap();
        assert_eq!(out, cloud());
    }

    #[test]
    fn seeded_and_label_preserving() {
        let a = augment(&cloud(), &AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = augment(&cloud(), &AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels(), Some(&[1u32, 2][..]));
        assert_ne!(a.positions(), cloud().positions());
    }
}
