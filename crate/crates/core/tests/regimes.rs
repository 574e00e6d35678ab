use i2p_core::inflation::{Sharing, TransformInit};
use i2p_core::models::{build, ArchKind, ArchSpec, Depth, FinetuneRegime, NetworkGraph};
use i2p_core::param::{ParamKind, ParamRole};
use i2p_core::train::synth::{gen_seg_scenes, gen_synthetic_3d, SceneConfig, Synth3dConfig};
use i2p_core::train::{train, Dataset, OptimizerConfig, TrainConfig};

fn cls_data() -> Dataset {
    let cfg = Synth3dConfig { points: 192, ..Synth3dConfig::default() };
    let (clouds, labels) = gen_synthetic_3d(4, 4, &cfg, 3).unwrap();
    Dataset::classification(clouds, labels, 4, 0.25).unwrap()
}

fn train_cfg() -> TrainConfig {
    TrainConfig { optim: OptimizerConfig { lr0: 0.05, epochs: 3, seed: 1, ..OptimizerConfig::default() }, batch_size: 4, augment: None }
}

fn snapshot(g: &NetworkGraph<f32>, f: impl Fn(ParamRole, ParamKind) -> bool) -> Vec<(String, Vec<u32>)> {
    g.params()
        .iter()
        .filter(|p| f(p.role, p.kind))
        .map(|p| (p.name.clone(), p.value.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn changed(a: &[(String, Vec<u32>)], b: &[(String, Vec<u32>)]) -> Vec<String> {
    a.iter().zip(b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.clone()).collect()
}

fn backbone(kind: ParamKind) -> impl Fn(ParamRole, ParamKind) -> bool {
    move |r, k| r == ParamRole::Backbone && k == kind
}

fn stats(r: ParamRole, k: ParamKind) -> bool {
    r == ParamRole::Backbone && matches!(k, ParamKind::RunningMean | ParamKind::RunningVar)
}

fn affine(r: ParamRole, k: ParamKind) -> bool {
    r == ParamRole::Backbone && matches!(k, ParamKind::BnGamma | ParamKind::BnBeta)
}

fn io(r: ParamRole, _: ParamKind) -> bool {
    r != ParamRole::Backbone && r != ParamRole::Transform
}

fn check_regimes(spec: &ArchSpec, data: &Dataset) {
    for regime in [FinetuneRegime::IO, FinetuneRegime::IoStats, FinetuneRegime::IoBn, FinetuneRegime::Whole] {
        let mut g = build::<f32>(spec).unwrap();
        let conv0 = snapshot(&g, backbone(ParamKind::ConvWeight));
        let stats0 = snapshot(&g, stats);
        let affine0 = snapshot(&g, affine);
        let io0 = snapshot(&g, io);
        train(&mut g, data, regime, &train_cfg()).unwrap();
        let conv = changed(&conv0, &snapshot(&g, backbone(ParamKind::ConvWeight)));
        let stats = changed(&stats0, &snapshot(&g, stats));
        let affine = changed(&affine0, &snapshot(&g, affine));
        assert!(!changed(&io0, &snapshot(&g, io)).is_empty(), "{regime:?}: io layers did not train");
        match regime {
            FinetuneRegime::Whole => assert!(!conv.is_empty(), "whole: no backbone conv changed"),
            _ => assert!(conv.is_empty(), "{regime:?}: conv weights moved: {conv:?}"),
        }
        match regime {
            FinetuneRegime::IO => assert!(stats.is_empty(), "io: running stats moved: {stats:?}"),
            _ => assert_eq!(stats.len(), stats0.len(), "{regime:?}: some running stats unchanged"),
        }
        match regime {
            FinetuneRegime::IO | FinetuneRegime::IoStats => assert!(affine.is_empty(), "{regime:?}: affine moved: {affine:?}"),
            _ => assert!(!affine.is_empty(), "{regime:?}: affine did not train"),
        }
    }
}

#[test]
fn classifier_freeze_integrity() {
    let spec = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 3, 4).with_width(0.125).with_seed(2);
    check_regimes(&spec, &cls_data());
}

#[test]
fn segmenter_freeze_integrity() {
    let cfg = SceneConfig { objects: 2, points_per_object: 192, ..SceneConfig::default() };
    let data = Dataset::segmentation(gen_seg_scenes(4, 4, &cfg, 5).unwrap(), 4, 0.25).unwrap();
    let spec = ArchSpec::new(ArchKind::ResnetSeg, Depth::Tiny, 3, 4).with_width(0.125).with_seed(2);
    check_regimes(&spec, &data);
}

#[test]
fn learned_transform_moves_only_the_transform_and_io() {
    let planar = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 1, 4).planar().with_width(0.125).with_seed(2);
    let source = build::<f32>(&planar).unwrap().export_archive().unwrap();
    let spec = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 3, 4).with_width(0.125).with_seed(2);
    for (sharing, regime) in [(Sharing::Shared, FinetuneRegime::LearnTShared), (Sharing::PerFilter, FinetuneRegime::LearnTPerFilter)] {
        let mut g = build::<f32>(&spec).unwrap();
        g.attach_learnable_transform(&source, sharing, TransformInit::FromDefault, 0).unwrap();
        let weights = |r: ParamRole, k: ParamKind| r == ParamRole::Backbone && !k.is_buffer();
        let base0 = snapshot(&g, weights);
        let t0 = snapshot(&g, |r, _| r == ParamRole::Transform);
        assert!(!t0.is_empty());
        train(&mut g, &cls_data(), regime, &train_cfg()).unwrap();
        let moved = changed(&base0, &snapshot(&g, weights));
        assert!(moved.is_empty(), "{sharing:?}: {moved:?}");
        assert!(!changed(&t0, &snapshot(&g, |r, _| r == ParamRole::Transform)).is_empty());
    }
}

#[test]
fn trainable_flags_follow_the_regime_table() {
    let mut g = build::<f32>(&ArchSpec::new(ArchKind::ResnetSeg, Depth::Tiny, 3, 4).with_width(0.125)).unwrap();
    for regime in [FinetuneRegime::IO, FinetuneRegime::IoStats, FinetuneRegime::IoBn, FinetuneRegime::Whole] {
        g.set_regime(regime).unwrap();
        for p in g.params().iter() {
            let expected = !p.kind.is_buffer()
                && match p.role {
                    ParamRole::Input | ParamRole::Output => true,
                    ParamRole::Backbone => regime == FinetuneRegime::Whole || (regime == FinetuneRegime::IoBn && matches!(p.kind, ParamKind::BnGamma | ParamKind::BnBeta)),
                    ParamRole::Transform => false,
                };
            assert_eq!(p.trainable, expected, "{regime:?} {}", p.name);
        }
    }
}
