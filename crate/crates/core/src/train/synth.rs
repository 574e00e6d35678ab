//! Procedural datasets: planar silhouettes, surface point clouds and
//! labelled multi-object scenes.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{bail, Result};
use crate::grid::Image;
use crate::voxel::PointCloud;

/// Number of shape families in either modality.
pub const SHAPE_CLASSES: usize = 5;

pub const SHAPES_2D: [&str; SHAPE_CLASSES] = ["circle", "square", "annulus", "triangle", "plus"];
pub const SHAPES_3D: [&str; SHAPE_CLASSES] = ["sphere", "cube", "torus", "cone", "cross"];

/// One RNG per `(seed, stream, index)` so samples are independent of how many
/// others were generated.
pub fn sample_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synth2dConfig {
    pub size: usize,
    /// Silhouette radius as a fraction of half the image edge.
    pub radius: (f64, f64),
    /// Center offset as a fraction of half the image edge.
    pub offset: f64,
    pub noise_std: f64,
}

impl Default for Synth2dConfig {
    fn default() -> Self {
        Self { size: 16, radius: (0.55, 0.85), offset: 0.12, noise_std: 0.1 }
    }
}

/// Whether normalized point `(u, v)` lies inside shape `class`.
pub fn inside_2d(class: usize, u: f64, v: f64) -> bool {
    let r = Float::hypot(u, v);
    match class {
        0 => r <= 1.0,
        1 => u.abs().max(v.abs()) <= 0.8,
        2 => (0.5..=1.0).contains(&r),
        3 => v >= -0.5 && v <= 1.0 - 3f64.sqrt() * u.abs(),
        _ => (u.abs() <= 0.3 && v.abs() <= 1.0) || (v.abs() <= 0.3 && u.abs() <= 1.0),
    }
}

/// Single-channel silhouette of `class` under a random similarity transform.
pub fn silhouette<R: Rng>(class: usize, cfg: &Synth2dConfig, rng: &mut R) -> Image<f32> {
    let half = cfg.size as f64 / 2.0;
    let theta = rng.random_range(0.0..2.0 * PI);
    let radius = rng.random_range(cfg.radius.0..=cfg.radius.1) * half;
    let cx = half + rng.random_range(-cfg.offset..=cfg.offset) * half;
    let cy = half + rng.random_range(-cfg.offset..=cfg.offset) * half;
    let (s, c) = Float::sin_cos(theta);
    let noise = (cfg.noise_std > 0.0).then(|| Normal::new(0.0, cfg.noise_std).expect("positive std"));
    let mut img = Image::zeros(1, cfg.size, cfg.size);
    for h in 0..cfg.size {
        for w in 0..cfg.size {
            let (dx, dy) = ((w as f64 + 0.5 - cx) / radius, (h as f64 + 0.5 - cy) / radius);
            let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
            let base = if inside_2d(class, u, v) { 1.0 } else { 0.0 };
            let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
            img.set(0, h, w, (base + n) as f32);
        }
    }
    img
}

/// `per_class` silhouettes for each of the first `classes` shapes, interleaved
/// by class.
pub fn gen_synthetic_2d(classes: usize, per_class: usize, cfg: &Synth2dConfig, seed: u64) -> Result<(Vec<Image<f32>>, Vec<u32>)> {
    check_classes(classes)?;
    if cfg.size < 4 {
        bail!(InvalidInput, "image size {} is too small", cfg.size);
    }
    let mut images = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for i in 0..per_class {
        for c in 0..classes {
            let mut rng = sample_rng(seed, c as u64, i as u64);
            images.push(silhouette(c, cfg, &mut rng));
            labels.push(c as u32);
        }
    }
    Ok((images, labels))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synth3dConfig {
    pub points: usize,
    pub scale: (f64, f64),
    pub jitter_std: f64,
    pub jitter_clip: f64,
    pub rotate: bool,
}

impl Default for Synth3dConfig {
    fn default() -> Self {
        Self { points: 1024, scale: (0.8, 1.2), jitter_std: 0.01, jitter_clip: 0.03, rotate: true }
    }
}

fn unit_vector<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [0; 3].map(|_| StandardNormal.sample(rng));
        let n = Float::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if n > 1e-9 {
            return v.map(|x| x / n);
        }
    }
}

/// Uniform point on the surface of the box with half-extents `h`.
fn box_surface<R: Rng>(h: [f64; 3], rng: &mut R) -> [f64; 3] {
    let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut axis = 2;
    for (a, &area) in areas.iter().enumerate() {
        if pick < area {
            axis = a;
            break;
        }
        pick -= area;
    }
    let mut p = [0.0; 3];
    for (d, v) in p.iter_mut().enumerate() {
        *v = if d == axis {
            if rng.random_bool(0.5) { h[d] } else { -h[d] }
        } else {
            rng.random_range(-h[d]..=h[d])
        };
    }
    p
}

/// Point on the canonical surface of `class`, all within the unit ball.
pub fn surface_point<R: Rng>(class: usize, rng: &mut R) -> [f64; 3] {
    match class {
        0 => unit_vector(rng),
        1 => box_surface([0.55; 3], rng),
        2 => {
            let (big, small) = (0.7, 0.3);
            let (su, cu) = Float::sin_cos(rng.random_range(0.0..2.0 * PI));
            let (sv, cv) = Float::sin_cos(rng.random_range(0.0..2.0 * PI));
            [(big + small * cv) * cu, (big + small * cv) * su, small * sv]
        }
        3 => {
            let (base, height, bottom) = (0.75, 1.4, -0.6);
            let slant = Float::hypot(base, height);
            let lateral = PI * base * slant;
            let disk = PI * base * base;
            let (s, c) = Float::sin_cos(rng.random_range(0.0..2.0 * PI));
            if rng.random_range(0.0..lateral + disk) < lateral {
                // Area density grows linearly with the distance from the apex.
                let f = Float::sqrt(rng.random_range(0.0..1.0f64));
                [f * base * c, f * base * s, bottom + height * (1.0 - f)]
            } else {
                let r = base * Float::sqrt(rng.random_range(0.0..1.0f64));
                [r * c, r * s, bottom]
            }
        }
        _ => {
            let mut h = [0.22; 3];
            h[rng.random_range(0..3)] = 0.9;
            box_surface(h, rng)
        }
    }
}

fn random_rotation<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let q: [f64; 4] = [0; 4].map(|_| StandardNormal.sample(rng));
    let n = Float::sqrt(q.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Surface sample of `class` with random rotation and scale, plus
/// clipped jitter on every coordinate. Returns the cloud and its scale.
pub fn surface_cloud<R: Rng>(class: usize, cfg: &Synth3dConfig, rng: &mut R) -> Result<(PointCloud, f64)> {
    let scale = if cfg.scale.0 < cfg.scale.1 { rng.random_range(cfg.scale.0..cfg.scale.1) } else { cfg.scale.0 };
    let rot = if cfg.rotate { random_rotation(rng) } else { [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
    let jitter = (cfg.jitter_std > 0.0).then(|| Normal::new(0.0, cfg.jitter_std).expect("positive std"));
    let mut pts = Vec::with_capacity(cfg.points);
    for _ in 0..cfg.points {
        let p = surface_point(class, rng);
        let r = [0, 1, 2].map(|i| rot[i][0] * p[0] + rot[i][1] * p[1] + rot[i][2] * p[2]);
        pts.push(r.map(|v| v * scale + jitter.as_ref().map_or(0.0, |d| d.sample(rng).clamp(-cfg.jitter_clip, cfg.jitter_clip))));
    }
    Ok((PointCloud::from_positions(pts)?, scale))
}

/// `per_class` clouds for each of the first `classes` shapes, interleaved.
pub fn gen_synthetic_3d(classes: usize, per_class: usize, cfg: &Synth3dConfig, seed: u64) -> Result<(Vec<PointCloud>, Vec<u32>)> {
    check_classes(classes)?;
    if cfg.points == 0 {
        bail!(InvalidInput, "clouds need at least one point");
    }
    let mut clouds = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for i in 0..per_class {
        for c in 0..classes {
            let mut rng = sample_rng(seed, 100 + c as u64, i as u64);
            clouds.push(surface_cloud(c, cfg, &mut rng)?.0);
            labels.push(c as u32);
        }
    }
    Ok((clouds, labels))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub objects: usize,
    pub points_per_object: usize,
    /// Objects sit on a jittered grid with this spacing.
    pub spacing: f64,
    pub shape: Synth3dConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let shape = Synth3dConfig { points: 0, scale: (0.7, 1.0), ..Synth3dConfig::default() };
        Self { objects: 3, points_per_object: 512, spacing: 2.6, shape }
    }
}

/// Multi-object scenes whose point labels are the shape class of the object
/// each point belongs to.
pub fn gen_seg_scenes(classes: usize, scenes: usize, cfg: &SceneConfig, seed: u64) -> Result<Vec<PointCloud>> {
    check_classes(classes)?;
    if cfg.objects == 0 || cfg.points_per_object == 0 {
        bail!(InvalidInput, "scenes need objects with points");
    }
    let shape = Synth3dConfig { points: cfg.points_per_object, ..cfg.shape };
    let side = (1..).find(|s| s * s >= cfg.objects).unwrap_or(1);
    let mut out = Vec::with_capacity(scenes);
    for s in 0..scenes {
        let mut rng = sample_rng(seed, 200, s as u64);
        let mut cells: Vec<usize> = (0..side * side).collect();
        let mut pts = Vec::with_capacity(cfg.objects * cfg.points_per_object);
        let mut labels = Vec::with_capacity(pts.capacity());
        for o in 0..cfg.objects {
            let pick = rng.random_range(o..cells.len());
            cells.swap(o, pick);
            let (gx, gy) = ((cells[o] % side) as f64, (cells[o] / side) as f64);
            let center = [
                (gx + rng.random_range(-0.1..0.1)) * cfg.spacing,
                (gy + rng.random_range(-0.1..0.1)) * cfg.spacing,
                rng.random_range(-0.2..0.2),
            ];
            let class = rng.random_range(0..classes);
            let (pc, _) = surface_cloud(class, &shape, &mut rng)?;
            for p in pc.positions() {
                pts.push([p[0] + center[0], p[1] + center[1], p[2] + center[2]]);
                labels.push(class as u32);
            }
        }
        out.push(PointCloud::new(pts, None, Some(labels))?);
    }
    Ok(out)
}

fn check_classes(classes: usize) -> Result<()> {
    if classes == 0 || classes > SHAPE_CLASSES {
        bail!(InvalidInput, "between 1 and {SHAPE_CLASSES} classes are available, got {classes}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = gen_synthetic_2d(5, 2, &Synth2dConfig::default(), 9).unwrap();
        let b = gen_synthetic_2d(5, 2, &Synth2dConfig::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1, vec![0, 1, 2, 3, 4, 0, 1, 2, 3, 4]);
    }

    #[test]
    fn sphere_points_lie_on_the_shell() {
        let cfg = Synth3dConfig { points: 500, scale: (1.0, 1.0), jitter_std: 0.01, jitter_clip: 0.03, rotate: true };
        let (pc, s) = surface_cloud(0, &cfg, &mut sample_rng(1, 0, 0)).unwrap();
        assert_eq!(s, 1.0);
        let bound = 0.03 * 3f64.sqrt();
        for p in pc.positions() {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - 1.0).abs() <= bound, "radius {r}");
        }
    }

    #[test]
    fn scenes_are_labelled() {
        let cfg = SceneConfig { points_per_object: 50, ..SceneConfig::default() };
        let scenes = gen_seg_scenes(4, 2, &cfg, 3).unwrap();
        assert_eq!(scenes[0].len(), 150);
        assert!(scenes[0].labels().unwrap().iter().all(|&l| l < 4));
    }
}
