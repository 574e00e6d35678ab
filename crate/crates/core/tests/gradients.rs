use i2p_core::inflation::{Sharing, TransformInit};
use i2p_core::models::{build, ArchKind, ArchSpec, Depth, FinetuneRegime, NetInput};
use i2p_core::ops::conv2d::PlanarShape;
use i2p_core::tensor::Matrix;
use i2p_core::train::{gradcheck, GradcheckConfig};
use i2p_core::verify::primitive_gradchecks;
use i2p_core::voxel::SparseVoxelTensor;

const TOL: f64 = 1e-6;

#[test]
fn every_primitive_matches_central_differences() {
    let checks = primitive_gradchecks(11).unwrap();
    assert!(checks.len() >= 15);
    for (name, err) in checks {
        assert!(err <= TOL, "{name}: {err}");
    }
}

fn small_scene(channels: usize) -> NetInput<f64> {
    let sites = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 1, 1], [2, 2, 2], [3, 2, 1], [0, 3, 3], [1, 3, 2]];
    let feats: Vec<f64> = (0..sites.len() * channels).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let t = SparseVoxelTensor::from_triples(&sites, Matrix::from_vec(sites.len(), channels, feats).unwrap(), 1.0, 0).unwrap();
    let b = SparseVoxelTensor::from_triples(&sites[..5], Matrix::from_vec(5, channels, (0..5 * channels).map(|i| (i as f64 * 0.31).sin()).collect()).unwrap(), 1.0, 0).unwrap();
    NetInput::Sparse(SparseVoxelTensor::collate(&[t, b]).unwrap())
}

#[test]
fn tiny_network_gradients_under_each_regime() {
    let spec = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 2, 3).with_width(0.0625).with_seed(4);
    let input = small_scene(2);
    for r in [FinetuneRegime::IO, FinetuneRegime::IoStats, FinetuneRegime::IoBn, FinetuneRegime::Whole] {
        let mut g = build::<f32>(&spec).unwrap();
        g.set_regime(r).unwrap();
        let rep = gradcheck(&g.cast::<f64>(), &input, &GradcheckConfig::default()).unwrap();
        assert!(rep.passes(TOL), "{r:?}: max {} leaking {:?}", rep.max_rel_err(), rep.leaking_frozen());
    }
}

#[test]
fn learnable_transform_gradients() {
    let planar = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 1, 3).planar().with_width(0.0625).with_seed(2);
    let source = build::<f32>(&planar).unwrap().export_archive().unwrap();
    let spec = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 2, 3).with_width(0.0625).with_seed(2);
    for (sharing, r) in [(Sharing::Shared, FinetuneRegime::LearnTShared), (Sharing::PerFilter, FinetuneRegime::LearnTPerFilter)] {
        let mut g = build::<f32>(&spec).unwrap();
        g.attach_learnable_transform(&source, sharing, TransformInit::Random, 5).unwrap();
        g.set_regime(r).unwrap();
        let rep = gradcheck(&g.cast::<f64>(), &small_scene(2), &GradcheckConfig::default()).unwrap();
        assert!(rep.passes(TOL), "{sharing:?}: {}", rep.max_rel_err());
        assert!(rep.params.iter().any(|p| p.trainable && p.name.starts_with("t.")));
    }
}

#[test]
fn segmentation_network_gradients() {
    let spec = ArchSpec::new(ArchKind::ResnetSeg, Depth::Tiny, 2, 3).with_width(0.0625).with_seed(8);
    let g = build::<f32>(&spec).unwrap();
    let rep = gradcheck(&g.cast::<f64>(), &small_scene(2), &GradcheckConfig::default()).unwrap();
    assert!(rep.passes(TOL), "{}", rep.max_rel_err());
}

#[test]
fn planar_network_gradients() {
    let spec = ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 1, 3).planar().with_width(0.0625).with_seed(3);
    let g = build::<f32>(&spec).unwrap();
    let shape = PlanarShape { batch: 2, height: 5, width: 5 };
    let feats = Matrix::from_vec(shape.pixels(), 1, (0..shape.pixels()).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
    let rep = gradcheck(&g.cast::<f64>(), &NetInput::Planar { feats, shape }, &GradcheckConfig::default()).unwrap();
    assert!(rep.passes(TOL), "{}", rep.max_rel_err());
}
