use std::path::{Path, PathBuf};

use i2p_core::archive::Dimensionality;
use i2p_core::inflation::inflate_network;
use i2p_core::models::{build, ArchKind, ArchSpec, FinetuneRegime, LoadScope, NetworkGraph};
use i2p_core::train::{self, pretrain_2d, Dataset, MetricReport, OptimizerConfig, PretrainConfig, TrainConfig};

use super::model::{archive_width, has_backbone, load_archive_file, policy_for};
use super::{invalid, CmdResult, EvalArgs, Pretrain2dArgs, Stage, TrainArgs};
use crate::config::{parse_regime, RunConfig};
use crate::dataset::{read_index, DatasetIndex, Task};
use crate::error::Error;
use crate::fsutil::{read_text, write_atomic};
use crate::i2pw::write_archive;
use crate::manifest::Manifest;
use crate::report::{confusion_csv, loss_csv, metrics_csv};

pub const MODEL_FILE: &str = "model.i2pw";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LOSS_FILE: &str = "loss.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn out_dir(out: &Path) -> CmdResult {
    if out.exists() && !out.is_dir() {
        invalid!("--out {} exists and is not a directory", out.display());
    }
    Ok(())
}

/// Writes `files` into `dir` and records their digests in `m`.
fn emit(dir: &Path, files: &[(&str, Vec<u8>)], mut m: Manifest) -> CmdResult {
    for (name, bytes) in files {
        write_atomic(&dir.join(name), bytes).runtime()?;
        m.output(name, bytes);
    }
    m.write(&dir.join(MANIFEST_FILE)).runtime()
}

pub(super) fn pretrain2d(a: Pretrain2dArgs) -> CmdResult {
    if !(1..=train::synth::SHAPE_CLASSES).contains(&a.classes) {
        invalid!("--classes must be in 1..={}", train::synth::SHAPE_CLASSES);
    }
    if a.per_class == 0 || a.val_per_class == 0 || a.batch_size == 0 || a.epochs == 0 {
        invalid!("sample counts, batch size and epochs must be positive");
    }
    if !(a.width > 0.0 && a.width.is_finite()) {
        invalid!("--width must be positive");
    }
    out_dir(&a.out)?;
    let defaults = PretrainConfig::default();
    let cfg = PretrainConfig {
        classes: a.classes,
        per_class_train: a.per_class,
        per_class_val: a.val_per_class,
        width_mult: a.width,
        seed: a.seed,
        train: TrainConfig {
            optim: OptimizerConfig { lr0: a.lr, epochs: a.epochs, ..defaults.train.optim },
            batch_size: a.batch_size,
            augment: None,
        },
        ..defaults
    };
    cfg.train.optim.validate().invalid()?;

    let (g, report) = pretrain_2d(&cfg).runtime()?;
    println!("pretrain2d: val top1 {:.4} over {} samples", report.top1, report.confusion.total());
    let mut m = Manifest::new("pretrain2d");
    for (k, v) in [
        ("classes", a.classes.to_string()),
        ("per_class", a.per_class.to_string()),
        ("val_per_class", a.val_per_class.to_string()),
        ("epochs", a.epochs.to_string()),
        ("lr", a.lr.to_string()),
        ("batch_size", a.batch_size.to_string()),
        ("width_mult", a.width.to_string()),
        ("seed", a.seed.to_string()),
    ] {
        m.set(k, v);
    }
    let archive = write_archive(&g.export_archive().runtime()?);
    emit(&a.out, &[(MODEL_FILE, archive), (METRICS_FILE, metrics_csv(&report).into_bytes()), (LOSS_FILE, loss_csv(&report).into_bytes())], m)
}

/// Config file (if any) with flag overrides applied.
fn resolve_config(path: Option<&PathBuf>) -> CmdResult<(RunConfig, Option<PathBuf>)> {
    match path {
        None => Ok((RunConfig::default(), None)),
        Some(p) => {
            if !p.is_file() {
                invalid!("config {} does not exist", p.display());
            }
            let text = read_text(p).invalid()?;
            Ok((RunConfig::parse(&p.display().to_string(), &text).invalid()?, Some(p.clone())))
        }
    }
}

/// A graph ready to train or score, with the files it was built from.
struct Prepared {
    graph: NetworkGraph<f32>,
    data: Dataset,
    index: DatasetIndex,
    inputs: Vec<PathBuf>,
}

fn spec_for(arch: &str, cfg: &RunConfig, index: &DatasetIndex, in_dim: usize) -> CmdResult<ArchSpec> {
    let spec = ArchSpec::from_name(arch, cfg.depth, in_dim, index.classes).invalid()?.with_width(cfg.width_mult).with_seed(cfg.seed);
    if spec.kind.is_seg() != (index.task == Task::Seg) {
        invalid!("architecture {arch} does not fit a {} dataset", index.task.name());
    }
    Ok(spec)
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn load_data(cfg: &RunConfig, out: &Path) -> CmdResult<(DatasetIndex, Dataset, usize)> {
    let Some(dir) = &cfg.data else {
        invalid!("no dataset: pass --data or set `data` in the config");
    };
    if same_dir(dir, out) {
        invalid!("--out must not be the dataset directory");
    }
    let index = read_index(dir).invalid()?;
    let (data, width) = index.load(cfg.voxel_size).invalid()?;
    Ok((index, data, width))
}

fn prepare_training(arch: &str, regime: FinetuneRegime, cfg: &RunConfig, out: &Path) -> CmdResult<Prepared> {
    let (index, data, in_dim) = load_data(cfg, out)?;
    let spec = spec_for(arch, cfg, &index, in_dim)?;
    if spec.kind == ArchKind::LinearBaseline && regime != FinetuneRegime::Whole {
        invalid!("regime {} needs a backbone; {arch} has none (use whole)", regime.name());
    }
    let mut g = build::<f32>(&spec).invalid()?;
    let mut inputs = index.files();
    match (&cfg.weights, &cfg.weights2d, regime.learn_t()) {
        (Some(_), Some(_), _) => invalid!("set at most one of `weights` and `weights2d`"),
        (Some(_), None, Some(_)) => invalid!("regime {} starts from a 2D archive; set `weights2d`", regime.name()),
        (None, None, Some(_)) => invalid!("regime {} needs `weights2d`", regime.name()),
        (Some(w), None, None) => {
            let a = load_archive_file(w)?;
            if a.dimensionality() != Dimensionality::Inflated3d {
                invalid!("{} is not a volumetric archive", w.display());
            }
            g.load_archive(&a, LoadScope::Backbone).invalid()?;
            inputs.push(w.clone());
        }
        (None, Some(w), learn) => {
            if !has_backbone(&spec) {
                invalid!("{arch} has no backbone to initialise from `weights2d`");
            }
            let a = load_archive_file(w)?;
            if a.dimensionality() != Dimensionality::Source2d {
                invalid!("{} is not a 2D archive", w.display());
            }
            if let Some(width) = archive_width(&a).filter(|&x| x != cfg.width_mult) {
                invalid!("{} was trained at width_mult {width}; the run uses {}", w.display(), cfg.width_mult);
            }
            match learn {
                Some(sharing) => g.attach_learnable_transform(&a, sharing, cfg.t_init, cfg.seed).invalid()?,
                None => {
                    let (policy, learned) = policy_for(&cfg.transform, &g)?;
                    let inflated = inflate_network(&a, &g, &policy).invalid()?;
                    g.load_archive(&inflated, LoadScope::Backbone).invalid()?;
                    inputs.extend(learned);
                }
            }
            inputs.push(w.clone());
        }
        (None, None, None) => {}
    }
    g.set_regime(regime).invalid()?;
    Ok(Prepared { graph: g, data, index, inputs })
}

fn record_inputs(m: &mut Manifest, cfg_path: Option<&PathBuf>, inputs: &[PathBuf]) -> CmdResult {
    if let Some(p) = cfg_path {
        m.input(p).invalid()?;
    }
    for p in inputs {
        m.input(p).invalid()?;
    }
    Ok(())
}

pub(super) fn train(a: TrainArgs) -> CmdResult {
    let (mut cfg, cfg_path) = resolve_config(a.config.as_ref())?;
    if let Some(arch) = a.arch {
        cfg.arch = Some(arch);
    }
    if let Some(r) = &a.regime {
        cfg.regime = Some(parse_regime(r).map_err(Error::Usage).invalid()?);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.data {
        cfg.data = Some(d);
    }
    let Some(arch) = cfg.arch.clone() else {
        invalid!("no architecture: pass --arch or set `arch`");
    };
    let Some(regime) = cfg.regime else {
        invalid!("no regime: pass --regime or set `regime`");
    };
    out_dir(&a.out)?;
    let tc = cfg.train_config().invalid()?;
    let mut p = prepare_training(&arch, regime, &cfg, &a.out)?;
    let mut m = Manifest::new("train");
    m.set("seed", cfg.seed);
    m.config(&cfg.to_text());
    record_inputs(&mut m, cfg_path.as_ref(), &p.inputs)?;

    let report = train::train(&mut p.graph, &p.data, regime, &tc).runtime()?;
    print_summary("train", &report, p.index.task);
    let archive = write_archive(&p.graph.export_archive().runtime()?);
    emit(
        &a.out,
        &[(MODEL_FILE, archive), (METRICS_FILE, metrics_csv(&report).into_bytes()), (LOSS_FILE, loss_csv(&report).into_bytes())],
        m,
    )
}

pub(super) fn eval(a: EvalArgs) -> CmdResult {
    let (mut cfg, cfg_path) = resolve_config(a.config.as_ref())?;
    if let Some(arch) = a.arch {
        cfg.arch = Some(arch);
    }
    if let Some(d) = a.data {
        cfg.data = Some(d);
    }
    let Some(arch) = cfg.arch.clone() else {
        invalid!("no architecture: pass --arch or set `arch`");
    };
    out_dir(&a.out)?;
    let (index, data, in_dim) = load_data(&cfg, &a.out)?;
    let spec = spec_for(&arch, &cfg, &index, in_dim)?;
    let weights = load_archive_file(&a.weights)?;
    let mut g = build::<f32>(&spec).invalid()?;
    g.load_archive(&weights, LoadScope::All).invalid()?;
    let mut m = Manifest::new("eval");
    m.config(&cfg.to_text());
    let mut inputs = index.files();
    inputs.push(a.weights.clone());
    record_inputs(&mut m, cfg_path.as_ref(), &inputs)?;

    let report = train::evaluate(&mut g, &data, cfg.batch_size).runtime()?;
    print_summary("eval", &report, index.task);
    emit(&a.out, &[(METRICS_FILE, metrics_csv(&report).into_bytes()), (CONFUSION_FILE, confusion_csv(&report).into_bytes())], m)
}

fn print_summary(cmd: &str, r: &MetricReport, task: Task) {
    match task {
        Task::Cls => println!("{cmd}: top1 {:.4} over {} samples", r.top1, r.confusion.total()),
        Task::Seg => println!("{cmd}: mIoU {:.4}, point accuracy {:.4} over {} points", r.miou, r.top1, r.confusion.total()),
    }
}
