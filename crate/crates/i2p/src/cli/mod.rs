//! `i2p` subcommands. Each command resolves and validates all of its inputs
//! first (exit 1 on failure), then computes and writes (exit 2 on failure).

mod model;
mod tools;
mod training;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::TransformSpec;
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable bounding the worker pool.
pub const THREADS_VAR: &str = "I2P_THREADS";

#[derive(Debug, Parser)]
#[command(name = "i2p", version, about = "Sparse voxel networks initialised from 2D filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic point-cloud dataset directory.
    GenSynth(GenSynthArgs),
    /// Quantize a point-cloud text file into an `.svt` tensor.
    Voxelize(VoxelizeArgs),
    /// Train the tiny planar classifier on synthetic silhouettes.
    Pretrain2d(Pretrain2dArgs),
    /// Lift a planar archive into a volumetric backbone archive.
    Inflate(InflateArgs),
    /// Finetune a volumetric network on a dataset directory.
    Train(TrainArgs),
    /// Score a trained network on a dataset directory.
    Eval(EvalArgs),
    /// Finite-difference checks of every primitive and a small network.
    Gradcheck(GradcheckArgs),
    /// Compare inflated 3D convolution with projected 2D convolution.
    CheckEquivalence(CheckEquivalenceArgs),
    /// Print a filter transform matrix.
    DumpT(DumpTArgs),
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    /// cls: one shape per cloud; seg: multi-object scenes with point labels.
    #[arg(long, default_value = "cls")]
    task: String,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Samples per class (cls).
    #[arg(long, default_value_t = 32)]
    per_class: usize,
    /// Scene count (seg).
    #[arg(long, default_value_t = 16)]
    scenes: usize,
    /// Points per cloud (cls) or per object (seg).
    #[arg(long, default_value_t = 384)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VoxelizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    voxel_size: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Pretrain2dArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 150)]
    per_class: usize,
    #[arg(long, default_value_t = 20)]
    val_per_class: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.125)]
    width: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InflateArgs {
    #[arg(long)]
    weights2d: PathBuf,
    /// default | t1 | t2 | t3 | learned:<archive>
    #[arg(long, default_value = "default")]
    transform: TransformSpec,
    #[arg(long, default_value = "tiny-cls")]
    arch: String,
    /// Backbone depth for linear-I/O architectures.
    #[arg(long, default_value = "tiny")]
    depth: String,
    #[arg(long)]
    out: PathBuf,
    /// Check every lifted 3x3 tensor against its 2D source.
    #[arg(long)]
    verify: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    arch: Option<String>,
    /// Trained archive, usually `<train out>/model.i2pw`.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value = "tiny-cls")]
    arch: String,
    #[arg(long, default_value = "whole")]
    regime: String,
    #[arg(long, default_value_t = 0.0625)]
    width: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Directory for the report and manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckEquivalenceArgs {
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Grid edge length.
    #[arg(long, default_value_t = 8)]
    size: usize,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the report and manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DumpTArgs {
    /// default | t1 | t2 | t3 | learned:<archive>
    #[arg(long, default_value = "default")]
    transform: TransformSpec,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    /// Layer of a per-layer or per-filter learned transform.
    #[arg(long)]
    layer: Option<String>,
    /// `m,n` filter of a per-filter learned transform.
    #[arg(long)]
    filter: Option<String>,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed command with the stage it failed in.
#[derive(Debug)]
pub(crate) enum Failure {
    Invalid(Error),
    Runtime(Error),
}

pub(crate) type CmdResult<T = ()> = std::result::Result<T, Failure>;

pub(crate) trait Stage<T> {
    fn invalid(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<Error>> Stage<T> for std::result::Result<T, E> {
    fn invalid(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        return Err($crate::cli::Failure::Invalid($crate::error::Error::Usage(format!($($arg)*))))
    };
}
pub(crate) use invalid;

fn threads() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(_) => Err(format!("{THREADS_VAR} is not valid unicode")),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("{THREADS_VAR} must be a positive integer, got `{v}`")),
        },
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::GenSynth(a) => tools::gen_synth(a),
        Command::Voxelize(a) => tools::voxelize(a),
        Command::Pretrain2d(a) => training::pretrain2d(a),
        Command::Inflate(a) => model::inflate(a),
        Command::Train(a) => training::train(a),
        Command::Eval(a) => training::eval(a),
        Command::Gradcheck(a) => tools::gradcheck(a),
        Command::CheckEquivalence(a) => tools::check_equivalence(a),
        Command::DumpT(a) => model::dump_t(a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let workers = match threads() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_INVALID;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
