//! Flat `key = value` run configuration. `#` starts a comment line. Unknown
//! or repeated keys and ill-typed values are parse errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use i2p_core::inflation::TransformInit;
use i2p_core::models::{Depth, FinetuneRegime};
use i2p_core::train::{AugmentConfig, OptimizerConfig, Schedule, TrainConfig};

use crate::error::{Error, Result};

/// Transform selection: handcrafted by name or learned from an archive.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformSpec {
    Default,
    T1,
    T2,
    T3,
    Learned(PathBuf),
}

impl FromStr for TransformSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "default" => Self::Default,
            "t1" => Self::T1,
            "t2" => Self::T2,
            "t3" => Self::T3,
            _ => match s.strip_prefix("learned:") {
                Some(p) if !p.is_empty() => Self::Learned(p.into()),
                _ => return Err(format!("unknown transform `{s}` (default|t1|t2|t3|learned:<path>)")),
            },
        })
    }
}

impl std::fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Default => f.write_str("default"),
            Self::T1 => f.write_str("t1"),
            Self::T2 => f.write_str("t2"),
            Self::T3 => f.write_str("t3"),
            Self::Learned(p) => write!(f, "learned:{}", p.display()),
        }
    }
}

pub fn parse_schedule(s: &str) -> Result<Schedule, String> {
    let bad = || format!("unknown schedule `{s}` (cosine|poly:<power>|step:<every>:<gamma>)");
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["cosine"] => Ok(Schedule::Cosine),
        ["poly", p] => {
            let power: f64 = p.parse().map_err(|_| bad())?;
            if !(power.is_finite() && power > 0.0) {
                return Err(format!("poly power must be positive, got `{p}`"));
            }
            Ok(Schedule::Poly { power })
        }
        ["step", e, g] => {
            let every: usize = e.parse().map_err(|_| bad())?;
            let gamma: f64 = g.parse().map_err(|_| bad())?;
            if every == 0 || !(gamma.is_finite() && gamma > 0.0) {
                return Err(format!("step schedule needs every >= 1 and gamma > 0, got `{s}`"));
            }
            Ok(Schedule::Step { every, gamma })
        }
        _ => Err(bad()),
    }
}

pub fn schedule_name(s: &Schedule) -> String {
    match s {
        Schedule::Cosine => "cosine".into(),
        Schedule::Poly { power } => format!("poly:{power}"),
        Schedule::Step { every, gamma } => format!("step:{every}:{gamma}"),
    }
}

pub fn parse_depth(s: &str) -> Result<Depth, String> {
    match s {
        "tiny" => Ok(Depth::Tiny),
        "18" | "resnet18" => Ok(Depth::R18),
        "50" | "resnet50" => Ok(Depth::R50),
        _ => Err(format!("unknown depth `{s}` (tiny|18|50)")),
    }
}

pub fn parse_regime(s: &str) -> Result<FinetuneRegime, String> {
    FinetuneRegime::from_name(s).map_err(|e| e.to_string())
}

fn parse_init(s: &str) -> Result<TransformInit, String> {
    match s {
        "default" => Ok(TransformInit::FromDefault),
        "random" => Ok(TransformInit::Random),
        _ => Err(format!("unknown transform init `{s}` (default|random)")),
    }
}

fn init_name(i: TransformInit) -> &'static str {
    match i {
        TransformInit::FromDefault => "default",
        TransformInit::Random => "random",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: Option<String>,
    /// Backbone depth for the linear-I/O architectures.
    pub depth: Depth,
    pub regime: Option<FinetuneRegime>,
    pub transform: TransformSpec,
    pub t_init: TransformInit,
    pub voxel_size: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: bool,
    pub seed: u64,
    pub width_mult: f64,
    pub data: Option<PathBuf>,
    /// Volumetric archive loaded into the backbone.
    pub weights: Option<PathBuf>,
    /// Planar archive inflated (or wrapped by a learnable transform).
    pub weights2d: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        Self {
            arch: None,
            depth: Depth::Tiny,
            regime: None,
            transform: TransformSpec::Default,
            t_init: TransformInit::FromDefault,
            voxel_size: 0.2,
            lr: o.lr0,
            momentum: o.momentum,
            weight_decay: o.weight_decay,
            schedule: o.schedule,
            epochs: o.epochs,
            batch_size: 8,
            augment: true,
            seed: 0,
            width_mult: 0.125,
            data: None,
            weights: None,
            weights2d: None,
        }
    }
}

pub const KEYS: [&str; 18] = [
    "arch", "depth", "regime", "transform", "t_init", "voxel_size", "lr", "momentum", "weight_decay", "schedule", "epochs",
    "batch_size", "augment", "seed", "width_mult", "data", "weights", "weights2d",
];

fn typed<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

fn finite_positive(v: &str) -> Result<f64, String> {
    let x: f64 = typed(v)?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("`{v}` must be a positive finite number"))
    }
}

fn finite_nonneg(v: &str) -> Result<f64, String> {
    let x: f64 = typed(v)?;
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("`{v}` must be a non-negative finite number"))
    }
}

fn positive_count(v: &str) -> Result<usize, String> {
    match typed::<usize>(v)? {
        0 => Err("must be at least 1".into()),
        n => Ok(n),
    }
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{v}` is not true|false")),
    }
}

impl RunConfig {
    /// Sets one key; the error message omits location.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "arch" => self.arch = Some(v.into()),
            "depth" => self.depth = parse_depth(v)?,
            "regime" => self.regime = Some(parse_regime(v)?),
            "transform" => self.transform = v.parse()?,
            "t_init" => self.t_init = parse_init(v)?,
            "voxel_size" => self.voxel_size = finite_positive(v)?,
            "lr" => self.lr = finite_positive(v)?,
            "momentum" => self.momentum = finite_nonneg(v)?,
            "weight_decay" => self.weight_decay = finite_nonneg(v)?,
            "schedule" => self.schedule = parse_schedule(v)?,
            "epochs" => self.epochs = positive_count(v)?,
            "batch_size" => self.batch_size = positive_count(v)?,
            "augment" => self.augment = boolean(v)?,
            "seed" => self.seed = typed(v)?,
            "width_mult" => self.width_mult = finite_positive(v)?,
            "data" => self.data = Some(v.into()),
            "weights" => self.weights = Some(v.into()),
            "weights2d" => self.weights2d = Some(v.into()),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn parse(src: &str, text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let indent = line.len() - line.trim_start().len();
            let Some(eq) = line.find('=') else {
                return Err(Error::parse(src, n, indent + 1, "expected `key = value`"));
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            let vcol = eq + 2 + (line[eq + 1..].len() - line[eq + 1..].trim_start().len());
            if key.is_empty() {
                return Err(Error::parse(src, n, indent + 1, "empty key"));
            }
            if !KEYS.contains(&key) {
                return Err(Error::parse(src, n, indent + 1, format!("unknown key `{key}`")));
            }
            if seen.contains(&key) {
                return Err(Error::parse(src, n, indent + 1, format!("key `{key}` repeated")));
            }
            seen.push(key);
            cfg.set(key, value).map_err(|m| Error::parse(src, n, vcol, format!("{key}: {m}")))?;
        }
        Ok(cfg)
    }

    /// Canonical text: every key in fixed order, unset options omitted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        if let Some(a) = &self.arch {
            kv("arch", a.clone());
        }
        kv("depth", match self.depth {
            Depth::Tiny => "tiny".into(),
            Depth::R18 => "18".into(),
            Depth::R50 => "50".into(),
        });
        if let Some(r) = self.regime {
            kv("regime", r.name().into());
        }
        kv("transform", self.transform.to_string());
        kv("t_init", init_name(self.t_init).into());
        kv("voxel_size", self.voxel_size.to_string());
        kv("lr", self.lr.to_string());
        kv("momentum", self.momentum.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("schedule", schedule_name(&self.schedule));
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("augment", self.augment.to_string());
        kv("seed", self.seed.to_string());
        kv("width_mult", self.width_mult.to_string());
        for (k, p) in [("data", &self.data), ("weights", &self.weights), ("weights2d", &self.weights2d)] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        s
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let optim = OptimizerConfig {
            lr0: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            schedule: self.schedule,
            epochs: self.epochs,
            seed: self.seed,
        };
        optim.validate()?;
        Ok(TrainConfig { optim, batch_size: self.batch_size, augment: self.augment.then(AugmentConfig::default) })
    }
}
