use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use i2p_core::inflation::TransformInit;
use i2p_core::models::{build, ArchKind, ArchSpec, Depth, NetInput};
use i2p_core::tensor::Matrix;
use i2p_core::train::synth::{gen_seg_scenes, gen_synthetic_3d, SceneConfig, Synth3dConfig, SHAPE_CLASSES};
use i2p_core::train::{gradcheck as network_gradcheck, GradcheckConfig};
use i2p_core::verify::{primitive_gradchecks, projection_trial, ProjectionTrial};
use i2p_core::voxel::{voxelize as quantize, SparseVoxelTensor};

use super::model::manifest_path;
use super::{invalid, CheckEquivalenceArgs, CmdResult, Failure, GenSynthArgs, GradcheckArgs, Stage, VoxelizeArgs};
use crate::cloud::parse_pointcloud;
use crate::config::parse_regime;
use crate::dataset::{write_dataset, Task};
use crate::error::Error;
use crate::fsutil::{read_text, write_atomic};
use crate::manifest::Manifest;
use crate::svt::write_svt;

const MANIFEST_FILE: &str = "manifest.txt";

/// Tolerances of the projection check.
pub const EQUIV_TOL_F32: f64 = 1e-4;
pub const EQUIV_TOL_F64: f64 = 1e-10;
pub const CONTROL_MIN: f64 = 1e-2;

pub(super) fn gen_synth(a: GenSynthArgs) -> CmdResult {
    let Some(task) = Task::parse(&a.task) else {
        invalid!("--task must be cls or seg, got `{}`", a.task);
    };
    if !(1..=SHAPE_CLASSES).contains(&a.classes) {
        invalid!("--classes must be in 1..={SHAPE_CLASSES}");
    }
    if a.points == 0 {
        invalid!("--points must be positive");
    }
    if a.out.exists() && !a.out.is_dir() {
        invalid!("--out {} exists and is not a directory", a.out.display());
    }
    let mut m = Manifest::new("gen-synth");
    m.set("task", task.name());
    m.set("classes", a.classes);
    m.set("points", a.points);
    m.set("seed", a.seed);
    let files = match task {
        Task::Cls => {
            if a.per_class == 0 {
                invalid!("--per-class must be positive");
            }
            m.set("per_class", a.per_class);
            let (clouds, labels) = gen_synthetic_3d(a.classes, a.per_class, &Synth3dConfig { points: a.points, ..Default::default() }, a.seed).runtime()?;
            write_dataset(&a.out, task, a.classes, &clouds, Some(&labels)).runtime()?
        }
        Task::Seg => {
            if a.scenes == 0 {
                invalid!("--scenes must be positive");
            }
            m.set("scenes", a.scenes);
            let cfg = SceneConfig { points_per_object: a.points, ..Default::default() };
            let scenes = gen_seg_scenes(a.classes, a.scenes, &cfg, a.seed).runtime()?;
            write_dataset(&a.out, task, a.classes, &scenes, None).runtime()?
        }
    };
    for f in &files {
        let rel = f.strip_prefix(&a.out).unwrap_or(f);
        let bytes = std::fs::read(f).map_err(|e| Error::io(f, e)).runtime()?;
        m.output(&rel.display().to_string(), &bytes);
    }
    m.write(&a.out.join(MANIFEST_FILE)).runtime()?;
    println!("wrote {} files to {}", files.len(), a.out.display());
    Ok(())
}

pub(super) fn voxelize(a: VoxelizeArgs) -> CmdResult {
    if !(a.voxel_size > 0.0 && a.voxel_size.is_finite()) {
        invalid!("--voxel-size must be positive");
    }
    if !a.input.is_file() {
        invalid!("input {} does not exist", a.input.display());
    }
    if (a.voxel_size as f32) as f64 != a.voxel_size {
        invalid!("--voxel-size {} is not representable in f32", a.voxel_size);
    }
    let text = read_text(&a.input).invalid()?;
    let pc = parse_pointcloud(&a.input.display().to_string(), &text).invalid()?;
    let (t, _) = quantize(&pc, a.voxel_size).invalid()?;
    let bytes = write_svt(&t.cast::<f32>()).runtime()?;
    write_atomic(&a.out, &bytes).runtime()?;
    let mut m = Manifest::new("voxelize");
    m.set("voxel_size", a.voxel_size);
    m.set("points", pc.len());
    m.set("voxels", t.len());
    m.input(&a.input).runtime()?;
    m.output(&a.out.display().to_string(), &bytes);
    m.write(&manifest_path(&a.out)).runtime()?;
    println!("{} points -> {} voxels", pc.len(), t.len());
    Ok(())
}

/// Two small sparse samples with `channels` input features.
fn gradcheck_scene(channels: usize) -> CmdResult<NetInput<f64>> {
    let sites = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 1, 1], [2, 2, 2], [3, 2, 1], [0, 3, 3], [1, 3, 2]];
    let feats: Vec<f64> = (0..sites.len() * channels).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let a = SparseVoxelTensor::from_triples(&sites, Matrix::from_vec(sites.len(), channels, feats).runtime()?, 1.0, 0).runtime()?;
    let b_feats = (0..5 * channels).map(|i| (i as f64 * 0.31).sin()).collect();
    let b = SparseVoxelTensor::from_triples(&sites[..5], Matrix::from_vec(5, channels, b_feats).runtime()?, 1.0, 0).runtime()?;
    Ok(NetInput::Sparse(SparseVoxelTensor::collate(&[a, b]).runtime()?))
}

pub(super) fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let regime = parse_regime(&a.regime).map_err(Error::Usage).invalid()?;
    if !(a.width > 0.0 && a.width <= 0.25) {
        invalid!("--width must be in (0, 0.25]");
    }
    if !(a.tol > 0.0 && a.tol.is_finite()) {
        invalid!("--tol must be positive");
    }
    let spec = ArchSpec::from_name(&a.arch, Depth::Tiny, 2, 3).invalid()?.with_width(a.width).with_seed(a.seed);
    if spec.kind == ArchKind::LinearBaseline && regime != i2p_core::models::FinetuneRegime::Whole {
        invalid!("{} has no backbone; only the whole regime applies", a.arch);
    }
    if let Some(out) = &a.out {
        if out.exists() && !out.is_dir() {
            invalid!("--out {} exists and is not a directory", out.display());
        }
    }
    let mut g = build::<f32>(&spec).invalid()?;
    if let Some(sharing) = regime.learn_t() {
        let planar = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 1, 3).planar().with_width(a.width).with_seed(a.seed);
        let source = build::<f32>(&planar).invalid()?.export_archive().invalid()?;
        g.attach_learnable_transform(&source, sharing, TransformInit::Random, a.seed).invalid()?;
    }
    g.set_regime(regime).invalid()?;
    let input = gradcheck_scene(2)?;

    let mut report = String::from("check,rel_err\n");
    let mut worst: f64 = 0.0;
    for (name, err) in primitive_gradchecks(a.seed).runtime()? {
        println!("{name:<28} {err:.3e}");
        writeln!(report, "{name},{err:e}").expect("string write");
        worst = worst.max(err);
    }
    let net = network_gradcheck(&g.cast::<f64>(), &input, &GradcheckConfig { seed: a.seed, ..Default::default() }).runtime()?;
    for p in &net.params {
        writeln!(report, "{},{:e}", p.name, p.rel_err).expect("string write");
    }
    let leaking = net.leaking_frozen();
    println!("network {} ({}): {} tensors, max {:.3e}", a.arch, regime.name(), net.params.len(), net.max_rel_err());
    for name in &leaking {
        println!("frozen tensor {name} has a nonzero gradient");
    }
    worst = worst.max(net.max_rel_err());
    let pass = worst <= a.tol && leaking.is_empty();
    println!("gradcheck: max {worst:.3e} tol {:e}: {}", a.tol, if pass { "PASS" } else { "FAIL" });

    if let Some(out) = &a.out {
        let mut m = Manifest::new("gradcheck");
        m.set("arch", &a.arch);
        m.set("regime", regime.name());
        m.set("width_mult", a.width);
        m.set("seed", a.seed);
        m.set("tol", a.tol);
        write_report(out, "gradcheck.csv", report.as_bytes(), m)?;
    }
    if pass {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::Usage(format!("gradient check failed: {worst:e} > {:e}", a.tol))))
    }
}

fn write_report(dir: &Path, name: &str, bytes: &[u8], mut m: Manifest) -> CmdResult {
    write_atomic(&dir.join(name), bytes).runtime()?;
    m.output(name, bytes);
    m.write(&dir.join(MANIFEST_FILE)).runtime()
}

/// Largest deviations over a seeded series of projection trials.
pub fn equivalence_maxima(trials: usize, size: usize, kernel: usize, seed: u64) -> i2p_core::Result<(ProjectionTrial, ProjectionTrial)> {
    let all = (0..trials as u64).into_par_iter().map(|i| projection_trial(seed, i, size, kernel)).collect::<i2p_core::Result<Vec<_>>>()?;
    let fold = |init: f64, pick: fn(&ProjectionTrial) -> f64, better: fn(f64, f64) -> f64| all.iter().map(pick).fold(init, better);
    let max = ProjectionTrial {
        oracle_f64: fold(0.0, |t| t.oracle_f64, f64::max),
        engine_f64: fold(0.0, |t| t.engine_f64, f64::max),
        engine_f32: fold(0.0, |t| t.engine_f32, f64::max),
        control: fold(0.0, |t| t.control, f64::max),
    };
    let min_control = ProjectionTrial { control: fold(f64::INFINITY, |t| t.control, f64::min), ..max };
    Ok((max, min_control))
}

pub(super) fn check_equivalence(a: CheckEquivalenceArgs) -> CmdResult {
    if a.trials == 0 {
        invalid!("--trials must be positive");
    }
    if !(1..=32).contains(&a.size) {
        invalid!("--size must be in 1..=32");
    }
    if !(1..=7).contains(&a.kernel) {
        invalid!("--kernel must be in 1..=7");
    }
    if let Some(out) = &a.out {
        if out.exists() && !out.is_dir() {
            invalid!("--out {} exists and is not a directory", out.display());
        }
    }
    let (max, min) = equivalence_maxima(a.trials, a.size, a.kernel, a.seed).runtime()?;
    let pass = max.oracle_f64 <= EQUIV_TOL_F64 && max.engine_f64 <= EQUIV_TOL_F64 && max.engine_f32 <= EQUIV_TOL_F32 && min.control > CONTROL_MIN;
    let report = format!(
        "metric,value\ntrials,{}\noracle_f64_max,{:e}\nengine_f64_max,{:e}\nengine_f32_max,{:e}\ncontrol_min,{:e}\n",
        a.trials, max.oracle_f64, max.engine_f64, max.engine_f32, min.control
    );
    println!("oracle f64 max {:.3e} (tol {EQUIV_TOL_F64:e})", max.oracle_f64);
    println!("engine f64 max {:.3e} (tol {EQUIV_TOL_F64:e})", max.engine_f64);
    println!("engine f32 max {:.3e} (tol {EQUIV_TOL_F32:e})", max.engine_f32);
    println!("random-T control min {:.3e} (must exceed {CONTROL_MIN:e})", min.control);
    println!("check-equivalence over {} trials: {}", a.trials, if pass { "PASS" } else { "FAIL" });
    if let Some(out) = &a.out {
        let mut m = Manifest::new("check-equivalence");
        m.set("trials", a.trials);
        m.set("size", a.size);
        m.set("kernel", a.kernel);
        m.set("seed", a.seed);
        write_report(out, "equivalence.csv", report.as_bytes(), m)?;
    }
    if pass {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::Usage("projection equivalence failed".into())))
    }
}
