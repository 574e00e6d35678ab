//! Production engine versus the dense references.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{bail, Result};
use crate::grid::DenseGrid;
use crate::inflation::{apply_transform, default_transform, init_transform, FilterTransform, Sharing, TransformInit};
use crate::kernel_map::{build_kernel_map, build_transposed_map};
use crate::ops::batchnorm::{BnMode, DEFAULT_EPS, DEFAULT_MOMENTUM};
use crate::ops::conv2d::PlanarShape;
use crate::ops::sparse_conv::{sparse_conv3d_forward, sparse_deconv_forward, ConvParams3D};
use crate::oracle::{dense_conv2d_ref, dense_conv3d_ref, dense_deconv_ref, projection_equivalence_check, relative_error, windowed_depth_sum, DEFAULT_STEP};
use crate::param::{ParamId, ParamKind, ParamRole, ParamStore};
use crate::real::Real;
use crate::tape::{Activation, BnCall, BnIds, ConvWeight, Layout, NodeId, Tape};
use crate::tensor::{Matrix, Tensor};
use crate::train::synth::sample_rng;
use crate::voxel::{from_dense, Coord, CoordSet, SparseVoxelTensor};

/// Standard-normal tensor.
pub fn random_tensor<R: Rng>(dims: &[usize], rng: &mut R) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| StandardNormal.sample(rng)).collect()).expect("sized")
}

/// Cube grid at `origin` whose cells are active with probability `density`.
pub fn random_grid<R: Rng>(channels: usize, size: usize, origin: [i32; 3], density: f64, rng: &mut R) -> DenseGrid<f64> {
    let mut g = DenseGrid::zeros(channels, [size; 3], origin);
    let cells = size * size * size;
    for cell in 0..cells {
        if rng.random_range(0.0..1.0) < density {
            for c in 0..channels {
                let v: f64 = StandardNormal.sample(rng);
                // Keep active cells distinguishable from empty ones.
                let v = if v == 0.0 { 1.0 } else { v };
                g.values_mut()[c * cells + cell] = v;
            }
        }
    }
    g
}

/// Level-1 grid active exactly at the stride-2 parents of the active cells
/// of `fine`, with fresh random features.
pub fn parent_grid<R: Rng>(fine: &DenseGrid<f64>, channels: usize, rng: &mut R) -> DenseGrid<f64> {
    let o = fine.origin();
    let [d, h, w] = fine.shape();
    let lo = o.map(|v| v.div_euclid(2));
    let hi = [o[0] + h as i32 - 1, o[1] + w as i32 - 1, o[2] + d as i32 - 1].map(|v| v.div_euclid(2));
    let ext = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
    let mut g = DenseGrid::zeros(channels, [ext[2], ext[0], ext[1]], lo);
    for z in 0..d {
        for x in 0..h {
            for y in 0..w {
                if (0..fine.channels()).all(|c| fine.get(c, z, x, y) == 0.0) {
                    continue;
                }
                let p = [o[0] + x as i32, o[1] + y as i32, o[2] + z as i32].map(|v| v.div_euclid(2));
                let (px, py, pz) = ((p[0] - lo[0]) as usize, (p[1] - lo[1]) as usize, (p[2] - lo[2]) as usize);
                if g.get(0, pz, px, py) == 0.0 {
                    for c in 0..channels {
                        let v: f64 = StandardNormal.sample(rng);
                        g.set(c, pz, px, py, if v == 0.0 { 1.0 } else { v });
                    }
                }
            }
        }
    }
    g
}

fn grid_value(g: &DenseGrid<f64>, c: usize, ijk: [i32; 3]) -> f64 {
    let o = g.origin();
    let [d, h, w] = g.shape();
    let (x, y, z) = (ijk[0] - o[0], ijk[1] - o[1], ijk[2] - o[2]);
    if x < 0 || y < 0 || z < 0 || z as usize >= d || x as usize >= h || y as usize >= w {
        return 0.0;
    }
    g.get(c, z as usize, x as usize, y as usize)
}

fn max_dev<S: Real>(out: &SparseVoxelTensor<S>, reference: &DenseGrid<f64>) -> f64 {
    let mut dev = 0.0f64;
    for (r, c) in out.coords().coords().iter().enumerate() {
        for (ch, v) in out.feats().row(r).iter().enumerate() {
            dev = dev.max((v.as_f64() - grid_value(reference, ch, c.ijk)).abs());
        }
    }
    dev
}

/// Inflates `w2d` through `t`, runs the sparse engine in `S` on every cell
/// of the fully active grid `x`, and returns the largest gap to the 2D
/// convolution of the windowed depth sums.
pub fn engine_projection_deviation<S: Real>(w2d: &Tensor<f64>, t: &FilterTransform<f64>, x: &DenseGrid<f64>) -> Result<f64> {
    let k = t.kernel();
    if k.is_multiple_of(2) {
        bail!(Shape, "projection check needs an odd kernel");
    }
    let sparse = from_dense(&x.cast::<S>(), 1.0, 0)?;
    let [d, h, w] = x.shape();
    if sparse.len() != d * h * w {
        bail!(InvalidInput, "projection check needs every cell active");
    }
    let w3d = apply_transform(&w2d.cast::<S>(), &t.cast::<S>())?;
    let km = build_kernel_map(sparse.coords(), k, 1)?;
    let y = sparse_conv3d_forward(&sparse, &ConvParams3D::new(w3d, 1)?, &km)?;
    let o = x.origin();
    let mut dev = 0.0f64;
    let mut slices = Vec::with_capacity(d);
    for z in 0..d {
        slices.push(dense_conv2d_ref(&windowed_depth_sum(x, k, z), w2d, 1)?);
    }
    for (r, c) in y.coords().coords().iter().enumerate() {
        let (i, j, z) = ((c.ijk[0] - o[0]) as usize, (c.ijk[1] - o[1]) as usize, (c.ijk[2] - o[2]) as usize);
        for (m, v) in y.feats().row(r).iter().enumerate() {
            dev = dev.max((v.as_f64() - slices[z].get(m, i, j)).abs());
        }
    }
    Ok(dev)
}

/// Deviations of one projection-equivalence trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionTrial {
    /// Brute-force oracle, default transform, f64.
    pub oracle_f64: f64,
    /// Sparse engine, default transform, f64.
    pub engine_f64: f64,
    /// Sparse engine, default transform, f32.
    pub engine_f32: f64,
    /// Sparse engine, random transform, f64 (negative control).
    pub control: f64,
}

/// Trial `index` of a seeded series: random `[3, 2, K, K]` 2D weights and a
/// fully active 2-channel grid of edge `size`.
pub fn projection_trial(seed: u64, index: u64, size: usize, kernel: usize) -> Result<ProjectionTrial> {
    if size == 0 {
        bail!(InvalidInput, "grid size must be positive");
    }
    let mut rng = sample_rng(seed, 4000, index);
    let w2d = random_tensor(&[3, 2, kernel, kernel], &mut rng);
    let origin = [rng.random_range(-4..4), rng.random_range(-4..4), rng.random_range(-4..4)];
    let x = random_grid(2, size, origin, 1.0, &mut rng);
    let t = default_transform::<f64>(kernel);
    let random = init_transform::<f64>(TransformInit::Random, kernel, Sharing::Shared, (3, 2), seed ^ index.wrapping_mul(0x9E37_79B9))?;
    Ok(ProjectionTrial {
        oracle_f64: projection_equivalence_check(&w2d, &x)?,
        engine_f64: engine_projection_deviation::<f64>(&w2d, &t, &x)?,
        engine_f32: engine_projection_deviation::<f32>(&w2d, &t, &x)?,
        control: engine_projection_deviation::<f64>(&w2d, &random, &x)?,
    })
}

/// Sparse convolution in `S` versus the dense reference at every active
/// output site.
pub fn sparse_conv_deviation<S: Real>(x: &DenseGrid<f64>, w3d: &Tensor<f64>, stride: usize) -> Result<f64> {
    let sparse = from_dense(&x.cast::<S>(), 1.0, 0)?;
    if sparse.is_empty() {
        return Ok(0.0);
    }
    let k = w3d.dims()[2];
    let km = build_kernel_map(sparse.coords(), k, stride)?;
    let y = sparse_conv3d_forward(&sparse, &ConvParams3D::new(w3d.cast::<S>(), stride)?, &km)?;
    Ok(max_dev(&y, &dense_conv3d_ref(x, w3d, stride)?))
}

/// Transposed sparse convolution of `x` onto the active set of `target`
/// versus the dense reference. At stride 2, `x` sits one level above
/// `target`; at stride 1 both share level 0.
pub fn sparse_deconv_deviation<S: Real>(x: &DenseGrid<f64>, target: &DenseGrid<f64>, w3d: &Tensor<f64>, stride: usize) -> Result<f64> {
    let sparse = if stride == 2 { from_dense(&x.cast::<S>(), 2.0, 1)? } else { from_dense(&x.cast::<S>(), 1.0, 0)? };
    let tgt = from_dense(target, 1.0, 0)?;
    if sparse.is_empty() || tgt.is_empty() {
        return Ok(0.0);
    }
    let target_set: Arc<CoordSet> = tgt.coords().clone();
    let y = sparse_deconv_forward(&sparse, &ConvParams3D::new(w3d.cast::<S>(), stride)?, &target_set)?;
    Ok(max_dev(&y, &dense_deconv_ref(x, w3d, stride)?))
}

/// One primitive under test: parameters, leaf inputs, and the recorded op.
struct PrimitiveCase {
    name: &'static str,
    params: ParamStore<f64>,
    inputs: Vec<Activation<f64>>,
    build: Box<dyn Fn(&mut Tape<f64>, &mut ParamStore<f64>, &[NodeId]) -> Result<NodeId>>,
}

fn case_loss(case: &PrimitiveCase, params: &mut ParamStore<f64>, inputs: &[Activation<f64>], r: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|a| tape.input(a.clone(), true)).collect();
    let out = (case.build)(&mut tape, params, &ids)?;
    Ok(tape.value(out).feats.data().iter().zip(r).map(|(a, b)| a * b).sum())
}

/// Normwise relative error of the analytic gradient of `sum(R * out)` with
/// respect to every trainable parameter and every input, against central
/// differences.
fn check_case(case: &PrimitiveCase, seed: u64) -> Result<f64> {
    let mut params = case.params.clone();
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = case.inputs.iter().map(|a| tape.input(a.clone(), true)).collect();
    let out = (case.build)(&mut tape, &mut params, &ids)?;
    let shape = (tape.value(out).feats.rows(), tape.value(out).feats.cols());
    let mut rng = sample_rng(seed, 4000, 0);
    let r: Vec<f64> = (0..shape.0 * shape.1).map(|_| rng.random_range(-1.0..1.0)).collect();
    params.zero_grad();
    let leaf_grads = tape.backward(&mut params, out, Matrix::from_vec(shape.0, shape.1, r.clone())?)?;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let h = DEFAULT_STEP;
    for id in 0..params.len() {
        if !params.get(id).trainable {
            continue;
        }
        analytic.extend_from_slice(&params.get(id).grad);
        for e in 0..params.get(id).value.len() {
            let mut p = case.params.clone();
            let orig = p.get(id).value.data()[e];
            p.get_mut(id).value.data_mut()[e] = orig + h;
            let up = case_loss(case, &mut p.clone(), &case.inputs, &r)?;
            p.get_mut(id).value.data_mut()[e] = orig - h;
            let down = case_loss(case, &mut p, &case.inputs, &r)?;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    for (i, leaf) in ids.iter().enumerate() {
        let g = leaf_grads[*leaf].clone().unwrap_or_else(|| Matrix::zeros(case.inputs[i].feats.rows(), case.inputs[i].feats.cols()));
        analytic.extend_from_slice(g.data());
        for e in 0..case.inputs[i].feats.data().len() {
            let mut inputs = case.inputs.clone();
            let orig = inputs[i].feats.data()[e];
            inputs[i].feats.data_mut()[e] = orig + h;
            let up = case_loss(case, &mut case.params.clone(), &inputs, &r)?;
            inputs[i].feats.data_mut()[e] = orig - h;
            let down = case_loss(case, &mut case.params.clone(), &inputs, &r)?;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    if numeric.iter().any(|v| !v.is_finite()) {
        bail!(Numeric, "finite difference in {} is not finite", case.name);
    }
    Ok(relative_error(&analytic, &numeric))
}

fn scene<R: Rng>(sites: &[[i32; 3]], channels: usize, level: u32, rng: &mut R) -> Result<Activation<f64>> {
    let feats = Matrix::from_vec(sites.len(), channels, (0..sites.len() * channels).map(|_| StandardNormal.sample(rng)).collect())?;
    let set = CoordSet::new(sites.iter().map(|&ijk| Coord::new(0, ijk)).collect(), level)?;
    Ok(Activation { feats, layout: Layout::Sparse(Arc::new(set)) })
}

/// Ten sites spread so stride-1 and stride-2 maps both have several pairs.
const SCENE: [[i32; 3]; 10] =
    [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 1], [2, 1, 0], [3, 2, 1], [2, 3, 2], [0, 2, 3], [3, 3, 3], [1, 3, 0]];

fn add_tensor<R: Rng>(ps: &mut ParamStore<f64>, name: &str, dims: &[usize], role: ParamRole, kind: ParamKind, rng: &mut R) -> ParamId {
    ps.add(name.into(), random_tensor(dims, rng), role, kind)
}

fn add_bn<R: Rng>(ps: &mut ParamStore<f64>, ch: usize, rng: &mut R) -> BnIds {
    let gamma = ps.add("bn.gamma".into(), Tensor::from_vec(&[ch], (0..ch).map(|_| rng.random_range(0.5..1.5)).collect()).expect("sized"), ParamRole::Backbone, ParamKind::BnGamma);
    let beta = add_tensor(ps, "bn.beta", &[ch], ParamRole::Backbone, ParamKind::BnBeta, rng);
    let mean = add_tensor(ps, "bn.mean", &[ch], ParamRole::Backbone, ParamKind::RunningMean, rng);
    let var = ps.add("bn.var".into(), Tensor::filled(&[ch], 1.5), ParamRole::Backbone, ParamKind::RunningVar);
    BnIds { gamma, beta, mean, var }
}

fn primitive_cases(seed: u64) -> Result<Vec<PrimitiveCase>> {
    let mut rng = sample_rng(seed, 4001, 0);
    let rng = &mut rng;
    let mut cases = Vec::new();
    let (cin, cout) = (2usize, 3usize);

    for (name, k, s) in [("sparse_conv k3 s1", 3usize, 1usize), ("sparse_conv k3 s2", 3, 2), ("sparse_conv k2 s1", 2, 1), ("sparse_conv k2 s2", 2, 2)] {
        let mut ps = ParamStore::new();
        let w = add_tensor(&mut ps, "w", &[cout, cin, k, k, k], ParamRole::Backbone, ParamKind::ConvWeight, rng);
        cases.push(PrimitiveCase {
            name,
            params: ps,
            inputs: alloc::vec![scene(&SCENE, cin, 0, rng)?],
            build: Box::new(move |t, p, x| {
                let km = Arc::new(build_kernel_map(t.value(x[0]).coords().expect("sparse"), k, s)?);
                t.sparse_conv(p, x[0], ConvWeight::Param(w), km)
            }),
        });
    }
    {
        let mut ps = ParamStore::new();
        let w = add_tensor(&mut ps, "w", &[cout, cin, 2, 2, 2], ParamRole::Output, ParamKind::ConvWeight, rng);
        let coarse = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 1, 1], [1, 1, 1]];
        let fine: Arc<CoordSet> = Arc::new(CoordSet::new(SCENE.iter().map(|&ijk| Coord::new(0, ijk)).collect(), 0)?);
        cases.push(PrimitiveCase {
            name: "sparse_deconv k2 s2",
            params: ps,
            inputs: alloc::vec![scene(&coarse, cin, 1, rng)?],
            build: Box::new(move |t, p, x| {
                let km = Arc::new(build_transposed_map(t.value(x[0]).coords().expect("sparse"), &fine, 2, 2)?);
                t.sparse_conv(p, x[0], ConvWeight::Param(w), km)
            }),
        });
    }
    for (name, mode) in [("batch_norm train", BnMode::Train), ("batch_norm eval", BnMode::Eval)] {
        let mut ps = ParamStore::new();
        let ids = add_bn(&mut ps, cin, rng);
        cases.push(PrimitiveCase {
            name,
            params: ps,
            inputs: alloc::vec![scene(&SCENE, cin, 0, rng)?],
            build: Box::new(move |t, p, x| {
                let call = BnCall { mode, stats_update: false, momentum: DEFAULT_MOMENTUM, eps: DEFAULT_EPS };
                t.batch_norm(p, x[0], ids, call)
            }),
        });
    }
    cases.push(PrimitiveCase {
        name: "relu",
        params: ParamStore::new(),
        inputs: alloc::vec![scene(&SCENE, cin, 0, rng)?],
        build: Box::new(|t, _, x| Ok(t.relu(x[0]))),
    });
    cases.push(PrimitiveCase {
        name: "residual add",
        params: ParamStore::new(),
        inputs: alloc::vec![scene(&SCENE, cin, 0, rng)?, scene(&SCENE, cin, 0, rng)?],
        build: Box::new(|t, _, x| t.add(x[0], x[1])),
    });
    cases.push(PrimitiveCase {
        name: "concat",
        params: ParamStore::new(),
        inputs: alloc::vec![scene(&SCENE, cin, 0, rng)?, scene(&SCENE, cout, 0, rng)?],
        build: Box::new(|t, _, x| t.concat(x[0], x[1])),
    });
    {
        let mut sites: Vec<Coord> = SCENE[..6].iter().map(|&ijk| Coord::new(0, ijk)).collect();
        sites.extend(SCENE[6..].iter().map(|&ijk| Coord::new(1, ijk)));
        let set = Arc::new(CoordSet::new(sites, 0)?);
        let feats = Matrix::from_vec(10, cin, (0..10 * cin).map(|_| StandardNormal.sample(rng)).collect())?;
        cases.push(PrimitiveCase {
            name: "global_pool",
            params: ParamStore::new(),
            inputs: alloc::vec![Activation { feats, layout: Layout::Sparse(set) }],
            build: Box::new(|t, _, x| t.global_pool(x[0])),
        });
    }
    {
        let mut ps = ParamStore::new();
        let w = add_tensor(&mut ps, "w", &[cout, cin], ParamRole::Output, ParamKind::LinearWeight, rng);
        let b = add_tensor(&mut ps, "b", &[cout], ParamRole::Output, ParamKind::Bias, rng);
        let feats = Matrix::from_vec(4, cin, (0..4 * cin).map(|_| StandardNormal.sample(rng)).collect())?;
        cases.push(PrimitiveCase {
            name: "linear",
            params: ps,
            inputs: alloc::vec![Activation { feats, layout: Layout::Flat }],
            build: Box::new(move |t, p, x| t.linear(p, x[0], w, Some(b))),
        });
    }
    for (name, s) in [("planar_conv k3 s1", 1usize), ("planar_conv k3 s2", 2)] {
        let mut ps = ParamStore::new();
        let w = add_tensor(&mut ps, "w", &[cout, cin, 3, 3], ParamRole::Backbone, ParamKind::ConvWeight, rng);
        let shape = PlanarShape { batch: 2, height: 3, width: 3 };
        let feats = Matrix::from_vec(shape.pixels(), cin, (0..shape.pixels() * cin).map(|_| StandardNormal.sample(rng)).collect())?;
        cases.push(PrimitiveCase {
            name,
            params: ps,
            inputs: alloc::vec![Activation { feats, layout: Layout::Planar(shape) }],
            build: Box::new(move |t, p, x| t.planar_conv(p, x[0], w, s)),
        });
    }
    for (name, sharing, w2d_trainable) in [
        ("dL/dT shared", Sharing::Shared, false),
        ("dL/dT per-filter", Sharing::PerFilter, false),
        ("dL/dT shared + dL/dW2d", Sharing::Shared, true),
    ] {
        let mut ps = ParamStore::new();
        let w2d = add_tensor(&mut ps, "w2d", &[cout, cin, 3, 3], ParamRole::Backbone, ParamKind::ConvWeight, rng);
        ps.get_mut(w2d).trainable = w2d_trainable;
        let per_filter = sharing == Sharing::PerFilter;
        let t = init_transform::<f64>(TransformInit::Random, 3, sharing, (cout, cin), seed)?;
        let tid = ps.add("t".into(), t.into_matrices(), ParamRole::Transform, ParamKind::Transform);
        cases.push(PrimitiveCase {
            name,
            params: ps,
            inputs: alloc::vec![scene(&SCENE, cin, 0, rng)?],
            build: Box::new(move |t, p, x| {
                let km = Arc::new(build_kernel_map(t.value(x[0]).coords().expect("sparse"), 3, 1)?);
                t.sparse_conv(p, x[0], ConvWeight::Transformed { w2d, transform: tid, per_filter }, km)
            }),
        });
    }
    Ok(cases)
}

/// Finite-difference agreement of every layer primitive on a ten-site scene,
/// as `(primitive, normwise relative error)`.
pub fn primitive_gradchecks(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    primitive_cases(seed)?.iter().map(|c| Ok((c.name, check_case(c, seed)?))).collect()
}
