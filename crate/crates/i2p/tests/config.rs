use std::path::PathBuf;

use i2p::config::{parse_schedule, schedule_name, RunConfig, TransformSpec};
use i2p::dataset::{read_index, write_dataset, Task};
use i2p::Error;
use i2p_core::inflation::TransformInit;
use i2p_core::models::{Depth, FinetuneRegime};
use i2p_core::train::synth::{gen_seg_scenes, gen_synthetic_3d, SceneConfig, Synth3dConfig};
use i2p_core::train::Schedule;

fn parse_err(text: &str) -> (usize, usize, String) {
    match RunConfig::parse("run.cfg", text) {
        Err(Error::Parse { line, column, msg, .. }) => (line, column, msg),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn config_keys_parse() {
    let text = "# comment\narch = tiny-seg\n\ndepth = 18\nregime = learn-t-perfilter\ntransform = learned:runs/t.i2pw\nt_init = random\n\
                voxel_size = 0.05\nlr = 0.02\nmomentum = 0\nweight_decay = 0\nschedule = step:10:0.5\nepochs = 4\nbatch_size = 2\n\
                augment = false\nseed = 9\nwidth_mult = 0.25\ndata = d\nweights2d = w.i2pw\n";
    let c = RunConfig::parse("run.cfg", text).unwrap();
    assert_eq!(c.arch.as_deref(), Some("tiny-seg"));
    assert_eq!(c.depth, Depth::R18);
    assert_eq!(c.regime, Some(FinetuneRegime::LearnTPerFilter));
    assert_eq!(c.transform, TransformSpec::Learned(PathBuf::from("runs/t.i2pw")));
    assert_eq!(c.t_init, TransformInit::Random);
    assert_eq!(c.schedule, Schedule::Step { every: 10, gamma: 0.5 });
    assert_eq!((c.epochs, c.batch_size, c.augment, c.seed), (4, 2, false, 9));
    assert_eq!(c.data, Some(PathBuf::from("d")));
    assert!(c.weights.is_none());
    let tc = c.train_config().unwrap();
    assert!(tc.augment.is_none());
    assert_eq!(tc.optim.lr0, 0.02);
}

#[test]
fn canonical_text_round_trips() {
    let mut c = RunConfig::default();
    assert_eq!(RunConfig::parse("x", &c.to_text()).unwrap(), c);
    c.arch = Some("linear-io-cls".into());
    c.regime = Some(FinetuneRegime::IoStats);
    c.transform = TransformSpec::T3;
    c.schedule = Schedule::Poly { power: 0.9 };
    c.lr = 0.3;
    c.weights = Some("a b/w.i2pw".into());
    assert_eq!(RunConfig::parse("x", &c.to_text()).unwrap(), c);
}

#[test]
fn config_errors_point_at_the_offending_token() {
    let (line, col, msg) = parse_err("arch = tiny-cls\n  learning_rate = 0.1\n");
    assert_eq!((line, col), (2, 3));
    assert!(msg.contains("unknown key `learning_rate`"), "{msg}");

    let (line, col, msg) = parse_err("epochs = 3\nepochs = 4\n");
    assert_eq!((line, col), (2, 1));
    assert!(msg.contains("repeated"), "{msg}");

    let (line, col, msg) = parse_err("lr =  -0.5\n");
    assert_eq!((line, col), (1, 7));
    assert!(msg.starts_with("lr:"), "{msg}");

    assert_eq!(parse_err("regime = everything\n").1, 10);
    assert_eq!(parse_err("\n\nseed\n").0, 3);
    assert_eq!(parse_err("schedule = step:0:0.1\n").0, 1);
    assert_eq!(parse_err("transform = t4\n").1, 13);
    assert_eq!(parse_err(" = 3\n").1, 2);
}

#[test]
fn schedules_and_transforms_have_stable_names() {
    for s in ["cosine", "poly:0.9", "step:30:0.1"] {
        assert_eq!(schedule_name(&parse_schedule(s).unwrap()), s);
    }
    for bad in ["", "linear", "poly:x", "step:5", "step:a:0.1", "poly:-1"] {
        assert!(parse_schedule(bad).is_err(), "{bad}");
    }
    for t in ["default", "t1", "t2", "t3", "learned:dir/a.i2pw"] {
        assert_eq!(t.parse::<TransformSpec>().unwrap().to_string(), t);
    }
    assert!("learned:".parse::<TransformSpec>().is_err());
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (clouds, labels) = gen_synthetic_3d(3, 2, &Synth3dConfig { points: 40, ..Default::default() }, 1).unwrap();
    let files = write_dataset(dir.path(), Task::Cls, 3, &clouds, Some(&labels)).unwrap();
    assert_eq!(files.len(), clouds.len() + 2);
    let index = read_index(dir.path()).unwrap();
    assert_eq!((index.task, index.classes, index.samples.len()), (Task::Cls, 3, 6));
    assert_eq!(index.samples.iter().map(|s| s.1.unwrap()).collect::<Vec<_>>(), labels);
    let (data, width) = index.load(0.25).unwrap();
    assert_eq!((data.len(), width, data.classes(), data.is_seg()), (6, 3, 3, false));

    let seg_dir = tempfile::tempdir().unwrap();
    let scenes = gen_seg_scenes(2, 2, &SceneConfig { objects: 2, points_per_object: 30, ..Default::default() }, 3).unwrap();
    write_dataset(seg_dir.path(), Task::Seg, 2, &scenes, None).unwrap();
    let index = read_index(seg_dir.path()).unwrap();
    assert!(index.samples.iter().all(|s| s.1.is_none()));
    assert!(index.load(0.25).unwrap().0.is_seg());
}

#[test]
fn broken_dataset_directories_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(read_index(dir.path()).is_err());
    let (clouds, labels) = gen_synthetic_3d(2, 1, &Synth3dConfig { points: 20, ..Default::default() }, 1).unwrap();
    write_dataset(dir.path(), Task::Cls, 2, &clouds, Some(&labels)).unwrap();
    std::fs::write(dir.path().join("samples.csv"), "file,label\n00000.pts,0\n00001.pts,7\n").unwrap();
    assert!(read_index(dir.path()).and_then(|i| i.load(0.25).map(|_| ())).is_err());
    std::fs::write(dir.path().join("samples.csv"), "file,label\n00000.pts,0\nmissing.pts,1\n").unwrap();
    assert!(read_index(dir.path()).and_then(|i| i.load(0.25).map(|_| ())).is_err());
}
