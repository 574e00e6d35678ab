use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use i2p::i2pw::read_archive;
use i2p::svt::read_svt;
use i2p_core::archive::Dimensionality;

const BIN: &str = env!("CARGO_BIN_EXE_i2p");

fn asset() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/tiny2d.i2pw")
}

fn i2p(dir: &Path, args: &[&str]) -> Output {
    i2p_env(dir, args, &[])
}

fn i2p_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(BIN);
    c.current_dir(dir).args(args).env_remove("I2P_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("spawn i2p")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stdout:\n{}\nstderr:\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    o
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(p.clone(), std::fs::read(&p).unwrap());
        }
    }
    out
}

fn gen_cls(dir: &Path) {
    ok(i2p(dir, &["gen-synth", "--task", "cls", "--classes", "3", "--per-class", "4", "--points", "160", "--seed", "5", "--out", "data"]));
}

const CFG: &str = "arch = tiny-cls\nepochs = 2\nwidth_mult = 0.0625\nbatch_size = 4\nvoxel_size = 0.25\ndata = data\n";

/// The bundled archive is width 0.125.
fn pretrained_cfg(epochs: usize) -> String {
    format!("arch = tiny-cls\nepochs = {epochs}\nwidth_mult = 0.125\nbatch_size = 4\nvoxel_size = 0.25\ndata = data\nweights2d = {}\n", asset().display())
}

#[test]
fn usage_errors_exit_one_without_side_effects() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&i2p(d, &["frobnicate"])), 1);
    assert_eq!(code(&i2p(d, &["train", "--bogus-flag"])), 1);
    assert_eq!(code(&i2p(d, &["--help"])), 0);
    assert_eq!(code(&i2p(d, &["--version"])), 0);
    assert_eq!(code(&i2p(d, &["inflate", "--weights2d", "missing.i2pw", "--out", "o.i2pw"])), 1);
    assert_eq!(code(&i2p(d, &["voxelize", "--input", "missing.pts", "--voxel-size", "0.5", "--out", "o.svt"])), 1);
    assert_eq!(code(&i2p(d, &["gen-synth", "--task", "detect", "--out", "g"])), 1);
    assert_eq!(code(&i2p(d, &["check-equivalence", "--trials", "0"])), 1);
    assert_eq!(code(&i2p(d, &["dump-t", "--transform", "t9"])), 1);

    gen_cls(d);
    std::fs::write(d.join("run.cfg"), CFG).unwrap();
    std::fs::write(d.join("narrow.cfg"), format!("{CFG}weights2d = {}\n", asset().display())).unwrap();
    let before = snapshot(&d.join("data"));
    for args in [
        &["train", "--config", "narrow.cfg", "--regime", "io", "--out", "r"][..],
        &["train", "--config", "run.cfg", "--regime", "everything", "--out", "r"],
        &["train", "--config", "run.cfg", "--out", "r"],
        &["train", "--config", "run.cfg", "--regime", "learn-t-shared", "--out", "r"],
        &["train", "--config", "run.cfg", "--arch", "linear-baseline", "--regime", "io", "--out", "r"],
        &["train", "--config", "run.cfg", "--arch", "tiny-seg", "--regime", "whole", "--out", "r"],
        &["train", "--config", "missing.cfg", "--regime", "whole", "--out", "r"],
        &["train", "--config", "run.cfg", "--regime", "whole", "--out", "data"],
        &["eval", "--config", "run.cfg", "--weights", "missing.i2pw", "--out", "r"],
    ] {
        let o = i2p(d, args);
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
        assert!(!d.join("r").exists(), "{args:?} wrote output before failing");
    }
    assert_eq!(snapshot(&d.join("data")), before);

    std::fs::write(d.join("bad.cfg"), "arch = tiny-cls\nepoch = 3\n").unwrap();
    let o = i2p(d, &["train", "--config", "bad.cfg", "--regime", "whole", "--out", "r"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cfg:2:1"), "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(d.join("bad.pts"), "#cols xyz\n0 0 0\n0 0 zero\n").unwrap();
    let o = i2p(d, &["voxelize", "--input", "bad.pts", "--voxel-size", "0.5", "--out", "o.svt"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.pts:3:5"));
    assert!(!d.join("o.svt").exists());
}

#[test]
fn failed_checks_exit_two() {
    let t = tempfile::tempdir().unwrap();
    let o = i2p(t.path(), &["gradcheck", "--tol", "1e-30"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn thread_variable_is_validated_and_does_not_change_results() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    assert_eq!(code(&i2p_env(d, &["dump-t"], &[("I2P_THREADS", "0")])), 1);
    assert_eq!(code(&i2p_env(d, &["dump-t"], &[("I2P_THREADS", "many")])), 1);
    gen_cls(d);
    std::fs::write(d.join("run.cfg"), CFG).unwrap();
    ok(i2p_env(d, &["train", "--config", "run.cfg", "--regime", "whole", "--out", "one"], &[("I2P_THREADS", "1")]));
    ok(i2p_env(d, &["train", "--config", "run.cfg", "--regime", "whole", "--out", "four"], &[("I2P_THREADS", "4")]));
    for f in ["metrics.csv", "loss.csv", "model.i2pw"] {
        assert_eq!(std::fs::read(d.join("one").join(f)).unwrap(), std::fs::read(d.join("four").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn rerunning_train_and_eval_reproduces_artifacts() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    gen_cls(d);
    std::fs::write(d.join("run.cfg"), pretrained_cfg(2)).unwrap();
    let inputs = snapshot(&d.join("data"));
    for out in ["a", "b"] {
        ok(i2p(d, &["train", "--config", "run.cfg", "--regime", "io", "--seed", "3", "--out", out]));
        ok(i2p(d, &["eval", "--config", "run.cfg", "--weights", &format!("{out}/model.i2pw"), "--out", &format!("{out}-eval")]));
    }
    for (dir, files) in [("a", &["metrics.csv", "loss.csv", "model.i2pw", "manifest.txt"][..]), ("a-eval", &["metrics.csv", "confusion.csv"][..])] {
        let other = dir.replacen('a', "b", 1);
        for f in files {
            assert_eq!(std::fs::read(d.join(dir).join(f)).unwrap(), std::fs::read(d.join(&other).join(f)).unwrap(), "{dir}/{f}");
        }
    }
    assert_eq!(snapshot(&d.join("data")), inputs);

    let manifest = std::fs::read_to_string(d.join("a/manifest.txt")).unwrap();
    for key in ["command = train", "version = ", "seed = 3", "config.regime = io", "input.data/00000.pts = ", "output.model.i2pw = "] {
        assert!(manifest.contains(key), "manifest lacks `{key}`:\n{manifest}");
    }
    let trained = read_archive(&std::fs::read(d.join("a/model.i2pw")).unwrap()).unwrap();
    assert_eq!(trained.dimensionality(), Dimensionality::Inflated3d);
    let metrics = std::fs::read_to_string(d.join("a-eval/metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value\ntop1,"), "{metrics}");

    ok(i2p(d, &["train", "--config", "run.cfg", "--regime", "io", "--seed", "4", "--out", "c"]));
    assert_ne!(std::fs::read(d.join("a/model.i2pw")).unwrap(), std::fs::read(d.join("c/model.i2pw")).unwrap());
}

#[test]
fn inflate_verify_on_the_bundled_archive() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let src = asset();
    let before = std::fs::read(&src).unwrap();
    let o = ok(i2p(d, &["inflate", "--weights2d", src.to_str().unwrap(), "--transform", "default", "--arch", "tiny-cls", "--verify", "--out", "inf.i2pw"]));
    assert!(stdout(&o).contains("PASS"));
    assert_eq!(std::fs::read(&src).unwrap(), before);
    let planar = read_archive(&before).unwrap();
    let lifted = read_archive(&std::fs::read(d.join("inf.i2pw")).unwrap()).unwrap();
    assert_eq!(planar.dimensionality(), Dimensionality::Source2d);
    assert_eq!(lifted.dimensionality(), Dimensionality::Inflated3d);
    let w = lifted.get("layer1.block0.conv1.weight").unwrap();
    assert_eq!(w.values.len(), 3 * planar.get("layer1.block0.conv1.weight").unwrap().values.len());
    assert!(d.join("inf.i2pw.manifest").is_file());

    for tr in ["t1", "t2", "t3"] {
        ok(i2p(d, &["inflate", "--weights2d", src.to_str().unwrap(), "--transform", tr, "--verify", "--out", &format!("{tr}.i2pw")]));
    }
    ok(i2p(d, &["inflate", "--weights2d", src.to_str().unwrap(), "--arch", "linear-io-seg", "--out", "lin.i2pw"]));
    assert_eq!(code(&i2p(d, &["inflate", "--weights2d", src.to_str().unwrap(), "--arch", "linear-io-seg", "--depth", "18", "--out", "r18.i2pw"])), 1);
    assert!(!d.join("r18.i2pw").exists());
    assert_eq!(code(&i2p(d, &["inflate", "--weights2d", "inf.i2pw", "--out", "again.i2pw"])), 1);
}

#[test]
fn learned_transforms_flow_from_training_to_inflation() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    gen_cls(d);
    std::fs::write(d.join("run.cfg"), pretrained_cfg(1)).unwrap();
    ok(i2p(d, &["train", "--config", "run.cfg", "--regime", "learn-t-shared", "--out", "lt"]));
    let o = ok(i2p(d, &["dump-t", "--transform", "learned:lt/model.i2pw"]));
    let text = stdout(&o);
    assert!(text.starts_with("# t.shared [9 x 27]\n"), "{text}");
    assert_eq!(text.lines().count(), 10);
    let o = ok(i2p(d, &["inflate", "--weights2d", asset().to_str().unwrap(), "--transform", "learned:lt/model.i2pw", "--verify", "--out", "l.i2pw"]));
    assert!(stdout(&o).contains("PASS"));
    assert_eq!(code(&i2p(d, &["dump-t", "--transform", "learned:lt/model.i2pw", "--layer", "layer1.block0.conv1"])), 1);
}

#[test]
fn verification_commands() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    let o = ok(i2p(d, &["check-equivalence", "--trials", "50", "--size", "8", "--seed", "7", "--out", "eq"]));
    assert!(stdout(&o).contains("PASS"));
    assert!(d.join("eq/equivalence.csv").is_file() && d.join("eq/manifest.txt").is_file());
    let o = ok(i2p(d, &["gradcheck", "--regime", "learn-t-perfilter", "--out", "gc"]));
    assert!(stdout(&o).contains("PASS"));
    let o = ok(i2p(d, &["dump-t", "--transform", "t3", "--kernel", "2"]));
    assert!(stdout(&o).starts_with("# t3 [4 x 8]\n"));
}

#[test]
fn voxelize_and_seg_pipeline() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(i2p(d, &["gen-synth", "--task", "seg", "--classes", "3", "--scenes", "3", "--points", "96", "--out", "seg"]));
    let o = ok(i2p(d, &["voxelize", "--input", "seg/00000.pts", "--voxel-size", "0.25", "--out", "s.svt"]));
    let svt = read_svt(&std::fs::read(d.join("s.svt")).unwrap()).unwrap();
    assert!(stdout(&o).contains(&format!("-> {} voxels", svt.len())));
    assert_eq!(svt.channels(), 3);
    assert_eq!(svt.voxel_size(), 0.25);
    assert!(d.join("s.svt.manifest").is_file());

    std::fs::write(d.join("seg.cfg"), "arch = tiny-seg\nepochs = 1\nwidth_mult = 0.0625\nbatch_size = 2\ndata = seg\n").unwrap();
    ok(i2p(d, &["train", "--config", "seg.cfg", "--regime", "whole", "--out", "st"]));
    ok(i2p(d, &["eval", "--config", "seg.cfg", "--weights", "st/model.i2pw", "--out", "se"]));
    let metrics = std::fs::read_to_string(d.join("se/metrics.csv")).unwrap();
    assert!(metrics.contains("\nmiou,") && metrics.contains("\niou_2,"), "{metrics}");
    let confusion = std::fs::read_to_string(d.join("se/confusion.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 4, "{confusion}");
}
