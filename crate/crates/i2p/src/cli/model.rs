use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use i2p_core::archive::{Dimensionality, WeightArchive};
use i2p_core::inflation::{flat3, handcrafted_transform, inflate_network, InflationPolicy, TransformKind};
use i2p_core::models::{build, ArchKind, ArchSpec, NetworkGraph};
use i2p_core::param::{ParamKind, ParamRole};
use i2p_core::Tensor;

use super::{invalid, CmdResult, DumpTArgs, Failure, InflateArgs, Stage};
use crate::config::{parse_depth, TransformSpec};
use crate::error::Error;
use crate::fsutil::{read, write_atomic};
use crate::i2pw::{read_archive, write_archive};
use crate::manifest::Manifest;

/// Reads an archive, reporting a missing file as invalid input.
pub(super) fn load_archive_file(path: &Path) -> CmdResult<WeightArchive> {
    if !path.is_file() {
        invalid!("weight archive {} does not exist", path.display());
    }
    read_archive(&read(path).invalid()?).map_err(|e| Failure::Invalid(Error::Usage(format!("{}: {e}", path.display()))))
}

/// Width multiplier of the network that exported `a`.
pub(super) fn archive_width(a: &WeightArchive) -> Option<f64> {
    a.get("layer1.block0.conv1.weight").map(|r| r.dims[0] as f64 / 64.0)
}

pub(super) fn handcrafted_kind(t: &TransformSpec) -> Option<TransformKind> {
    match t {
        TransformSpec::Default => Some(TransformKind::Default),
        TransformSpec::T1 => Some(TransformKind::T1),
        TransformSpec::T2 => Some(TransformKind::T2),
        TransformSpec::T3 => Some(TransformKind::T3),
        TransformSpec::Learned(_) => None,
    }
}

/// Inflation policy for `spec` against `target`, plus the archive it read.
pub(super) fn policy_for(spec: &TransformSpec, target: &NetworkGraph<f32>) -> CmdResult<(InflationPolicy, Option<PathBuf>)> {
    match (handcrafted_kind(spec), spec) {
        (Some(kind), _) => Ok((InflationPolicy::handcrafted(kind).invalid()?, None)),
        (None, TransformSpec::Learned(path)) => {
            let a = load_archive_file(path)?;
            if !a.records().iter().any(|r| r.name.starts_with("t.")) {
                invalid!("{} holds no transform records", path.display());
            }
            Ok((InflationPolicy::from_learned_archive(&a, target).invalid()?, Some(path.clone())))
        }
        (None, _) => unreachable!("handcrafted kinds are covered"),
    }
}

pub(super) fn has_backbone(spec: &ArchSpec) -> bool {
    spec.kind != ArchKind::LinearBaseline
}

/// Lifted 3x3 tensors checked against their sources. Returns
/// `(tensors, 2D params, 3D params)`.
fn verify_inflation(source: &WeightArchive, inflated: &WeightArchive, kind: Option<TransformKind>) -> Result<(usize, usize, usize), String> {
    let t = kind.map(|k| handcrafted_transform::<f32>(k, 3).expect("handcrafted"));
    let (mut tensors, mut p2, mut p3) = (0, 0, 0);
    for rec in inflated.records().iter().filter(|r| r.dims.len() == 5 && r.dims[2] == 3) {
        let src = source.get(&rec.name).ok_or_else(|| format!("{} has no 2D source", rec.name))?;
        if src.values.len() * 3 != rec.values.len() {
            return Err(format!("{}: {} values from {} (expected 3x)", rec.name, rec.values.len(), src.values.len()));
        }
        if let Some(t) = &t {
            for f in 0..src.values.len() / 9 {
                for kz in 0..3 {
                    for kx in 0..3 {
                        for ky in 0..3 {
                            let col = flat3(3, kz, kx, ky);
                            let row = (0..9).find(|&r| t.entry(r, col) != 0.0).expect("one source per tap");
                            if rec.values[f * 27 + col] != src.values[f * 9 + row] {
                                return Err(format!("{}: filter {f} tap ({kz},{kx},{ky}) does not match its source", rec.name));
                            }
                        }
                    }
                }
            }
        }
        tensors += 1;
        p2 += src.values.len();
        p3 += rec.values.len();
    }
    if tensors == 0 {
        return Err("no 3x3 tensors were lifted".into());
    }
    Ok((tensors, p2, p3))
}

pub(super) fn inflate(a: InflateArgs) -> CmdResult {
    let depth = parse_depth(&a.depth).map_err(Error::Usage).invalid()?;
    let source = load_archive_file(&a.weights2d)?;
    if source.dimensionality() != Dimensionality::Source2d {
        invalid!("{} is not a 2D archive", a.weights2d.display());
    }
    let Some(width) = archive_width(&source) else {
        invalid!("{} has no `layer1.block0.conv1.weight`; not a planar ResNet archive", a.weights2d.display());
    };
    let spec = ArchSpec::from_name(&a.arch, depth, 3, 2).invalid()?.with_width(width).shape_only();
    if !has_backbone(&spec) {
        invalid!("architecture {} has no backbone to inflate", a.arch);
    }
    if a.out == a.weights2d {
        invalid!("--out must differ from --weights2d");
    }
    let target = build::<f32>(&spec).invalid()?;
    let (policy, learned) = policy_for(&a.transform, &target)?;

    // Failures here mean the archive does not fit the target.
    let inflated = inflate_network(&source, &target, &policy).invalid()?;
    if a.verify {
        let (n, p2, p3) = verify_inflation(&source, &inflated, handcrafted_kind(&a.transform)).map_err(|m| Failure::Runtime(Error::Usage(format!("verify failed: {m}"))))?;
        println!("verify: {n} 3x3 tensors, {p3} parameters = 3 x {p2}: PASS");
    }
    let bytes = write_archive(&inflated);
    write_atomic(&a.out, &bytes).runtime()?;
    let mut m = Manifest::new("inflate");
    m.set("arch", &a.arch);
    m.set("depth", &a.depth);
    m.set("width_mult", width);
    m.set("transform", &a.transform);
    m.input(&a.weights2d).runtime()?;
    if let Some(p) = learned {
        m.input(&p).runtime()?;
    }
    m.output(&a.out.display().to_string(), &bytes);
    m.write(&manifest_path(&a.out)).runtime()?;
    let backbone = target.params().iter().filter(|p| p.role == ParamRole::Backbone && p.kind == ParamKind::ConvWeight).count();
    println!("inflated {backbone} conv tensors into {}", a.out.display());
    Ok(())
}

/// Sibling manifest of a file artifact.
pub(super) fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn learned_matrix(path: &Path, layer: Option<&str>, filter: Option<&str>) -> CmdResult<(String, Tensor<f32>)> {
    let a = load_archive_file(path)?;
    let name = match (layer, filter) {
        (None, None) => "t.shared".to_string(),
        (Some(l), None) => format!("t.{l}"),
        (Some(l), Some(f)) => {
            let Some((m, n)) = f.split_once(',').and_then(|(m, n)| Some((m.trim().parse::<usize>().ok()?, n.trim().parse::<usize>().ok()?))) else {
                invalid!("--filter takes `m,n`, got `{f}`");
            };
            format!("t.{l}.{m}.{n}")
        }
        (None, Some(_)) => invalid!("--filter needs --layer"),
    };
    let Some(rec) = a.get(&name) else {
        let known: Vec<&str> = a.records().iter().map(|r| r.name.as_str()).filter(|n| n.starts_with("t.")).take(8).collect();
        invalid!("{} has no record `{name}` (transform records: {})", path.display(), if known.is_empty() { "none".into() } else { known.join(", ") });
    };
    if rec.dims.len() != 2 {
        invalid!("record `{name}` is {:?}, not a matrix", rec.dims);
    }
    Ok((name, rec.to_tensor().invalid()?))
}

pub(super) fn dump_t(a: DumpTArgs) -> CmdResult {
    let (label, m) = match handcrafted_kind(&a.transform) {
        Some(kind) => {
            if a.layer.is_some() || a.filter.is_some() {
                invalid!("--layer and --filter apply to learned transforms");
            }
            if !(1..=7).contains(&a.kernel) {
                invalid!("kernel must be in 1..=7");
            }
            let t = handcrafted_transform::<f32>(kind, a.kernel).invalid()?;
            (a.transform.to_string(), t.matrices().clone())
        }
        None => {
            let TransformSpec::Learned(path) = &a.transform else { unreachable!() };
            learned_matrix(path, a.layer.as_deref(), a.filter.as_deref())?
        }
    };
    let (rows, cols) = (m.dims()[0], m.dims()[1]);
    let mut s = format!("# {label} [{rows} x {cols}]\n");
    for r in 0..rows {
        let row: Vec<String> = m.data()[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
        writeln!(s, "{}", row.join(" ")).expect("string write");
    }
    match &a.out {
        Some(out) => {
            write_atomic(out, s.as_bytes()).runtime()?;
            let mut man = Manifest::new("dump-t");
            man.set("transform", &a.transform);
            man.set("kernel", a.kernel);
            if let TransformSpec::Learned(p) = &a.transform {
                man.input(p).runtime()?;
            }
            man.output(&out.display().to_string(), s.as_bytes());
            man.write(&manifest_path(out)).runtime()?;
        }
        None => print!("{s}"),
    }
    Ok(())
}
