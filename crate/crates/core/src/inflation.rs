//! Filter transforms: `K^2 x K^3` matrices lifting flattened 2D kernel slices
//! to flattened 3D kernel slices.
//!
//! Flattening is fixed: a 2D tap `(kx, ky)` sits at `kx*K + ky`, a 3D tap
//! `(kz, kx, ky)` at `kz*K^2 + kx*K + ky`. A 3D slice is the row vector
//! `v . T` where `v` is the flattened 2D slice.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archive::{Dimensionality, WeightArchive};
use crate::error::{bail, Error, Result};
use crate::models::NetworkGraph;
use crate::param::{ParamKind, ParamRole};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    /// Repeat the 2D slice along z.
    Default,
    /// Repeat along x.
    T1,
    /// Repeat along y.
    T2,
    /// Repeat along the main space diagonal, cyclically shifted per z-plane.
    T3,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sharing {
    Shared,
    /// One matrix per `(output, input)` filter of a layer.
    PerFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformInit {
    FromDefault,
    Random,
}

/// `matrices` is `[K^2, K^3]` when shared and `[M, N, K^2, K^3]` per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTransform<S = f32> {
    kernel: usize,
    kind: TransformKind,
    sharing: Sharing,
    trainable: bool,
    matrices: Tensor<S>,
}

#[inline]
pub fn flat2(k: usize, kx: usize, ky: usize) -> usize {
    kx * k + ky
}

#[inline]
pub fn flat3(k: usize, kz: usize, kx: usize, ky: usize) -> usize {
    (kz * k + kx) * k + ky
}

impl<S: Real> FilterTransform<S> {
    pub fn new(kernel: usize, kind: TransformKind, sharing: Sharing, trainable: bool, matrices: Tensor<S>) -> Result<Self> {
        let (k2, k3) = (kernel * kernel, kernel * kernel * kernel);
        let d = matrices.dims();
        let ok = match sharing {
            Sharing::Shared => d == [k2, k3],
            Sharing::PerFilter => d.len() == 4 && d[2] == k2 && d[3] == k3,
        };
        if kernel == 0 || !ok {
            bail!(Shape, "transform matrices {d:?} do not match K={kernel} ({sharing:?})");
        }
        if !matrices.is_finite() {
            bail!(InvalidInput, "transform entries must be finite");
        }
        if !matches!(kind, TransformKind::Learned) && matrices.data().iter().any(|&v| v != S::zero() && v != S::one()) {
            bail!(InvalidInput, "handcrafted transforms are 0/1 matrices");
        }
        Ok(Self { kernel, kind, sharing, trainable, matrices })
    }

    #[inline]
    pub fn kernel(&self) -> usize {
        self.kernel
    }

    #[inline]
    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    #[inline]
    pub fn sharing(&self) -> Sharing {
        self.sharing
    }

    #[inline]
    pub fn trainable(&self) -> bool {
        self.trainable
    }

    #[inline]
    pub fn matrices(&self) -> &Tensor<S> {
        &self.matrices
    }

    pub fn into_matrices(self) -> Tensor<S> {
        self.matrices
    }

    pub fn set_trainable(mut self, trainable: bool) -> Self {
        self.trainable = trainable;
        self
    }

    /// `T[row, col]` of the shared matrix, or of filter `(0, 0)`.
    pub fn entry(&self, row: usize, col: usize) -> S {
        let k3 = self.kernel.pow(3);
        self.matrices.data()[row * k3 + col]
    }

    /// Broadcasts a shared transform to every filter of an `[M, N]` layer.
    pub fn to_per_filter(&self, m: usize, n: usize) -> Result<Self> {
        if self.sharing != Sharing::Shared {
            bail!(State, "transform is already per-filter");
        }
        let block = self.matrices.data();
        let mut data = Vec::with_capacity(m * n * block.len());
        for _ in 0..m * n {
            data.extend_from_slice(block);
        }
        let (k2, k3) = (self.kernel.pow(2), self.kernel.pow(3));
        Self::new(self.kernel, self.kind, Sharing::PerFilter, self.trainable, Tensor::from_vec(&[m, n, k2, k3], data)?)
    }

    pub fn cast<T: Real>(&self) -> FilterTransform<T> {
        FilterTransform {
            kernel: self.kernel,
            kind: self.kind,
            sharing: self.sharing,
            trainable: self.trainable,
            matrices: self.matrices.cast(),
        }
    }
}

fn zero_one<S: Real>(kernel: usize, kind: TransformKind, source: impl Fn(usize, usize, usize) -> usize) -> FilterTransform<S> {
    let (k2, k3) = (kernel * kernel, kernel * kernel * kernel);
    let mut m = vec![S::zero(); k2 * k3];
    for kz in 0..kernel {
        for kx in 0..kernel {
            for ky in 0..kernel {
                let row = source(kz, kx, ky);
                m[row * k3 + flat3(kernel, kz, kx, ky)] = S::one();
            }
        }
    }
    FilterTransform {
        kernel,
        kind,
        sharing: Sharing::Shared,
        trainable: false,
        matrices: Tensor::from_vec(&[k2, k3], m).expect("square dims"),
    }
}

/// `T[i, kz*K^2 + i] = 1`: every z-slice of the 3D filter is the 2D filter.
pub fn default_transform<S: Real>(kernel: usize) -> FilterTransform<S> {
    zero_one(kernel, TransformKind::Default, |_, kx, ky| flat2(kernel, kx, ky))
}

pub fn handcrafted_transform<S: Real>(kind: TransformKind, kernel: usize) -> Result<FilterTransform<S>> {
    let k = kernel;
    Ok(match kind {
        TransformKind::Default => default_transform(k),
        // W3d[kz, kx, ky] = W2d[kz, ky]
        TransformKind::T1 => zero_one(k, kind, |kz, _, ky| flat2(k, kz, ky)),
        // W3d[kz, kx, ky] = W2d[kz, kx]
        TransformKind::T2 => zero_one(k, kind, |kz, kx, _| flat2(k, kz, kx)),
        // W3d[kz, kx, ky] = W2d[(kx - kz) mod K, (ky - kz) mod K]
        TransformKind::T3 => zero_one(k, kind, |kz, kx, ky| flat2(k, (kx + k - kz) % k, (ky + k - kz) % k)),
        TransformKind::Learned => bail!(InvalidInput, "learned transforms are not handcrafted"),
    })
}

/// Learnable transform initialized from the default or uniformly in
/// `[-a, a]`, `a = sqrt(6 / (K^2 + K^3))`.
pub fn init_transform<S: Real>(mode: TransformInit, kernel: usize, sharing: Sharing, filters: (usize, usize), seed: u64) -> Result<FilterTransform<S>> {
    let (k2, k3) = (kernel * kernel, kernel * kernel * kernel);
    let base = match mode {
        TransformInit::FromDefault => default_transform::<S>(kernel).into_matrices(),
        TransformInit::Random => {
            let a = libm_sqrt(6.0 / (k2 + k3) as f64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = match sharing {
                Sharing::Shared => k2 * k3,
                Sharing::PerFilter => filters.0 * filters.1 * k2 * k3,
            };
            let data = (0..n).map(|_| S::lit(rng.random_range(-a..a))).collect();
            let dims = match sharing {
                Sharing::Shared => vec![k2, k3],
                Sharing::PerFilter => vec![filters.0, filters.1, k2, k3],
            };
            return FilterTransform::new(kernel, TransformKind::Learned, sharing, true, Tensor::from_vec(&dims, data)?);
        }
    };
    let shared = FilterTransform::new(kernel, TransformKind::Learned, Sharing::Shared, true, base)?;
    match sharing {
        Sharing::Shared => Ok(shared),
        Sharing::PerFilter => shared.to_per_filter(filters.0, filters.1),
    }
}

#[inline]
fn libm_sqrt(v: f64) -> f64 {
    num_traits::Float::sqrt(v)
}

/// Raw `v . T` per filter over `[M, N, K*K]` weights.
pub(crate) fn apply_raw<S: Real>(w2d: &[S], filters: usize, kernel: usize, t: &[S], per_filter: bool) -> Vec<S> {
    let (k2, k3) = (kernel * kernel, kernel * kernel * kernel);
    let mut out = vec![S::zero(); filters * k3];
    for f in 0..filters {
        let v = &w2d[f * k2..(f + 1) * k2];
        let tm = if per_filter { &t[f * k2 * k3..(f + 1) * k2 * k3] } else { t };
        let o = &mut out[f * k3..(f + 1) * k3];
        for (i, &vi) in v.iter().enumerate() {
            let trow = &tm[i * k3..(i + 1) * k3];
            for (acc, &tv) in o.iter_mut().zip(trow) {
                *acc += vi * tv;
            }
        }
    }
    out
}

/// `(dL/dT, dL/dw2d)` of [`apply_raw`] given `dL/dW3d`.
pub(crate) fn gradient_raw<S: Real>(
    g3d: &[S],
    w2d: &[S],
    filters: usize,
    kernel: usize,
    t: &[S],
    per_filter: bool,
    want_w2d: bool,
) -> (Vec<S>, Option<Vec<S>>) {
    let (k2, k3) = (kernel * kernel, kernel * kernel * kernel);
    let mut dt = vec![S::zero(); t.len()];
    let mut dw = want_w2d.then(|| vec![S::zero(); filters * k2]);
    for f in 0..filters {
        let v = &w2d[f * k2..(f + 1) * k2];
        let g = &g3d[f * k3..(f + 1) * k3];
        let base = if per_filter { f * k2 * k3 } else { 0 };
        for (i, &vi) in v.iter().enumerate() {
            let drow = &mut dt[base + i * k3..base + (i + 1) * k3];
            for (d, &gv) in drow.iter_mut().zip(g) {
                *d += vi * gv;
            }
        }
        if let Some(dw) = dw.as_mut() {
            for i in 0..k2 {
                let trow = &t[base + i * k3..base + (i + 1) * k3];
                let mut s = S::zero();
                for (&tv, &gv) in trow.iter().zip(g) {
                    s += tv * gv;
                }
                dw[f * k2 + i] += s;
            }
        }
    }
    (dt, dw)
}

fn conv2d_dims(w2d: &Tensor<impl Real>) -> Result<(usize, usize, usize)> {
    let d = w2d.dims();
    if d.len() != 4 || d[2] != d[3] {
        bail!(Shape, "2D weights must be [M, N, K, K], got {d:?}");
    }
    Ok((d[0], d[1], d[2]))
}

fn check_transform<S: Real>(m: usize, n: usize, k: usize, t: &FilterTransform<S>) -> Result<()> {
    if t.kernel != k {
        bail!(Shape, "transform for K={} applied to K={k} weights", t.kernel);
    }
    if t.sharing == Sharing::PerFilter && (t.matrices.dims()[0] != m || t.matrices.dims()[1] != n) {
        bail!(Shape, "per-filter transform {:?} for a [{m}, {n}] layer", &t.matrices.dims()[..2]);
    }
    Ok(())
}

/// `[M, N, K, K]` to `[M, N, K, K, K]`.
pub fn apply_transform<S: Real>(w2d: &Tensor<S>, t: &FilterTransform<S>) -> Result<Tensor<S>> {
    let (m, n, k) = conv2d_dims(w2d)?;
    check_transform(m, n, k, t)?;
    let out = apply_raw(w2d.data(), m * n, k, t.matrices.data(), t.sharing == Sharing::PerFilter);
    Tensor::from_vec(&[m, n, k, k, k], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformGradient<S> {
    /// Same dims as the transform's matrices.
    pub d_transform: Tensor<S>,
    pub d_w2d: Option<Tensor<S>>,
}

/// Back-propagates `dL/dW3d` into the transform (summed over filters when
/// shared) and optionally into the 2D weights (`dL/dW3d . T^T`).
pub fn transform_gradient<S: Real>(dw3d: &Tensor<S>, w2d: &Tensor<S>, t: &FilterTransform<S>, want_w2d: bool) -> Result<TransformGradient<S>> {
    if !t.trainable {
        bail!(State, "transform is not trainable");
    }
    let (m, n, k) = conv2d_dims(w2d)?;
    check_transform(m, n, k, t)?;
    if dw3d.dims() != [m, n, k, k, k] {
        bail!(Shape, "3D gradient {:?} does not match [{m}, {n}, {k}, {k}, {k}]", dw3d.dims());
    }
    let (dt, dw) = gradient_raw(dw3d.data(), w2d.data(), m * n, k, t.matrices.data(), t.sharing == Sharing::PerFilter, want_w2d);
    Ok(TransformGradient {
        d_transform: Tensor::from_vec(t.matrices.dims(), dt)?,
        d_w2d: dw.map(|d| Tensor::from_vec(w2d.dims(), d)).transpose()?,
    })
}

/// Transform assignment per conv layer (by weight name without `.weight`).
/// `K = 1` layers fall back to the identity when unassigned.
#[derive(Debug, Clone, Default)]
pub struct InflationPolicy {
    default: Option<FilterTransform<f32>>,
    per_layer: Vec<(String, FilterTransform<f32>)>,
}

impl InflationPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn uniform(t: FilterTransform<f32>) -> Self {
        Self { default: Some(t), per_layer: Vec::new() }
    }

    pub fn handcrafted(kind: TransformKind) -> Result<Self> {
        Ok(Self::uniform(handcrafted_transform(kind, 3)?))
    }

    pub fn with_layer(mut self, layer: &str, t: FilterTransform<f32>) -> Self {
        self.per_layer.retain(|(n, _)| n != layer);
        self.per_layer.push((layer.into(), t));
        self
    }

    pub fn transform_for(&self, layer: &str, kernel: usize) -> Result<FilterTransform<f32>> {
        if let Some((_, t)) = self.per_layer.iter().find(|(n, _)| n == layer) {
            return Ok(t.clone());
        }
        match &self.default {
            Some(t) if t.kernel() == kernel => Ok(t.clone()),
            _ if kernel == 1 => Ok(default_transform(1)),
            _ => Err(Error::Policy(format!("no transform assigned to layer {layer} (K={kernel})"))),
        }
    }

    /// Policy from learned `t.*` records: `t.shared`, `t.<layer>` or
    /// `t.<layer>.<m>.<n>`.
    pub fn from_learned_archive(archive: &WeightArchive, target: &NetworkGraph<f32>) -> Result<Self> {
        let mut policy = Self::new();
        if let Some(rec) = archive.get("t.shared") {
            let t = rec.to_tensor()?;
            let k = kernel_of_transform(t.dims())?;
            policy.default = Some(FilterTransform::new(k, TransformKind::Learned, Sharing::Shared, false, t)?);
        }
        for p in target.params().iter().filter(|p| p.role == ParamRole::Backbone && p.kind == ParamKind::ConvWeight) {
            let layer = p.name.trim_end_matches(".weight");
            let d = p.value.dims();
            let (m, n, k) = (d[0], d[1], d[2]);
            if let Some(rec) = archive.get(&format!("t.{layer}")) {
                let t = rec.to_tensor()?;
                policy = policy.with_layer(layer, FilterTransform::new(k, TransformKind::Learned, Sharing::Shared, false, t)?);
                continue;
            }
            if archive.get(&format!("t.{layer}.0.0")).is_none() {
                continue;
            }
            let (k2, k3) = (k * k, k * k * k);
            let mut data = Vec::with_capacity(m * n * k2 * k3);
            for mi in 0..m {
                for ni in 0..n {
                    let rec = archive.require(&format!("t.{layer}.{mi}.{ni}"))?;
                    if rec.values.len() != k2 * k3 {
                        bail!(Archive, "t.{layer}.{mi}.{ni} has {} entries, expected {}", rec.values.len(), k2 * k3);
                    }
                    data.extend_from_slice(&rec.values);
                }
            }
            let t = Tensor::from_vec(&[m, n, k2, k3], data)?;
            policy = policy.with_layer(layer, FilterTransform::new(k, TransformKind::Learned, Sharing::PerFilter, false, t)?);
        }
        Ok(policy)
    }
}

fn kernel_of_transform(dims: &[usize]) -> Result<usize> {
    if dims.len() != 2 {
        bail!(Archive, "shared transform must be 2D, got {dims:?}");
    }
    let k = num_traits::Float::round(libm_cbrt(dims[1] as f64)) as usize;
    if k * k != dims[0] || k * k * k != dims[1] {
        bail!(Archive, "transform dims {dims:?} are not K^2 x K^3");
    }
    Ok(k)
}

#[inline]
fn libm_cbrt(v: f64) -> f64 {
    num_traits::Float::cbrt(v)
}

/// Lifts every backbone tensor the target expects out of a 2D archive:
/// conv weights go through their assigned transform, batch-norm tensors are
/// copied verbatim. Input and output layers are not inherited.
pub fn inflate_network(source: &WeightArchive, target: &NetworkGraph<f32>, policy: &InflationPolicy) -> Result<WeightArchive> {
    if source.dimensionality() != Dimensionality::Source2d {
        bail!(Archive, "source archive is not a 2D archive");
    }
    let mut out = WeightArchive::new(Dimensionality::Inflated3d);
    for p in target.params().iter().filter(|p| p.role == ParamRole::Backbone) {
        let rec = source.require(&p.name)?;
        match p.kind {
            ParamKind::ConvWeight => {
                let w2d = rec.to_tensor()?;
                let d = p.value.dims();
                if d.len() != 5 || w2d.dims() != &d[..4] {
                    bail!(Archive, "tensor {} is {:?}, expected 2D counterpart of {d:?}", p.name, w2d.dims());
                }
                let layer = p.name.trim_end_matches(".weight");
                let t = policy.transform_for(layer, d[2])?;
                out.insert_tensor(&p.name, &apply_transform(&w2d, &t)?)?;
            }
            _ => {
                if rec.dims_usize() != p.value.dims() {
                    bail!(Archive, "tensor {} is {:?}, expected {:?}", p.name, rec.dims, p.value.dims());
                }
                out.insert(rec.clone())?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_is_identity_for_every_kind() {
        for kind in [TransformKind::Default, TransformKind::T1, TransformKind::T2, TransformKind::T3] {
            let t = handcrafted_transform::<f64>(kind, 1).unwrap();
            assert_eq!(t.matrices().data(), &[1.0]);
        }
    }

    #[test]
    fn k2_default_layout() {
        let t = default_transform::<f64>(2);
        assert_eq!(t.matrices().dims(), &[4, 8]);
        for i in 0..4 {
            for j in 0..8 {
                let expect = if j == i || j == 4 + i { 1.0 } else { 0.0 };
                assert_eq!(t.entry(i, j), expect);
            }
        }
    }

    #[test]
    fn t1_repeats_along_x() {
        let w = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let t = handcrafted_transform(TransformKind::T1, 2).unwrap();
        let w3 = apply_transform(&w, &t).unwrap();
        for kz in 0..2 {
            for ky in 0..2 {
                assert_eq!(w3.data()[flat3(2, kz, 0, ky)], w3.data()[flat3(2, kz, 1, ky)]);
            }
        }
    }

    #[test]
    fn zero_transform_gives_zero_weights() {
        let w = Tensor::from_vec(&[2, 1, 3, 3], (0..18).map(|v| v as f64).collect()).unwrap();
        let t = FilterTransform::new(3, TransformKind::Learned, Sharing::Shared, true, Tensor::zeros(&[9, 27])).unwrap();
        assert!(apply_transform(&w, &t).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_mismatch_is_shape_error() {
        let w = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        assert!(matches!(apply_transform(&w, &default_transform(2)), Err(Error::Shape(_))));
    }

    #[test]
    fn frozen_transform_gradient_is_state_error() {
        let w = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        let g = Tensor::<f64>::zeros(&[1, 1, 3, 3, 3]);
        assert!(matches!(transform_gradient(&g, &w, &default_transform(3), false), Err(Error::State(_))));
    }

    #[test]
    fn one_hot_filter_selects_row() {
        let mut v = vec![0.0f64; 9];
        v[4] = 1.0;
        let w = Tensor::from_vec(&[1, 1, 3, 3], v).unwrap();
        let g = Tensor::from_vec(&[1, 1, 3, 3, 3], (0..27).map(|i| i as f64 + 1.0).collect()).unwrap();
        let t = default_transform::<f64>(3).set_trainable(true);
        let grad = transform_gradient(&g, &w, &t, false).unwrap();
        for row in 0..9 {
            for col in 0..27 {
                let got = grad.d_transform.data()[row * 27 + col];
                let expect = if row == 4 { g.data()[col] } else { 0.0 };
                assert_eq!(got, expect);
            }
        }
    }

    #[test]
    fn init_from_default_matches_default() {
        let t = init_transform::<f32>(TransformInit::FromDefault, 3, Sharing::Shared, (1, 1), 0).unwrap();
        assert_eq!(t.matrices(), default_transform::<f32>(3).matrices());
        assert!(t.trainable());
    }

    #[test]
    fn random_init_is_seeded() {
        let a = init_transform::<f64>(TransformInit::Random, 3, Sharing::Shared, (1, 1), 9).unwrap();
        let b = init_transform::<f64>(TransformInit::Random, 3, Sharing::Shared, (1, 1), 9).unwrap();
        let c = init_transform::<f64>(TransformInit::Random, 3, Sharing::Shared, (1, 1), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = (6.0f64 / 36.0).sqrt();
        assert!(a.matrices().data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn policy_requires_assignment() {
        let p = InflationPolicy::new();
        assert!(matches!(p.transform_for("layer1.block0.conv1", 3), Err(Error::Policy(_))));
        assert_eq!(p.transform_for("layer2.block0.down", 1).unwrap().matrices().data(), &[1.0]);
    }
}
