use i2p_core::inflation::{apply_transform, default_transform, flat2, flat3, handcrafted_transform, inflate_network, init_transform, FilterTransform, InflationPolicy, Sharing, TransformInit, TransformKind};
use i2p_core::models::{build, ArchKind, ArchSpec, Depth, LoadScope};
use i2p_core::param::{ParamKind, ParamRole};
use i2p_core::tensor::Tensor;
use i2p_core::verify::random_tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Analytic source tap `(kx', ky')` of 3D tap `(kz, kx, ky)`.
fn source_tap(kind: TransformKind, k: usize, kz: usize, kx: usize, ky: usize) -> (usize, usize) {
    match kind {
        TransformKind::Default => (kx, ky),
        TransformKind::T1 => (kz, ky),
        TransformKind::T2 => (kz, kx),
        TransformKind::T3 => ((kx + k - kz) % k, (ky + k - kz) % k),
        TransformKind::Learned => unreachable!(),
    }
}

const KINDS: [TransformKind; 4] = [TransformKind::Default, TransformKind::T1, TransformKind::T2, TransformKind::T3];

#[test]
fn default_transform_replicates_every_z_slice() {
    let mut r = rng(1);
    for k in 1..=5 {
        let w = random_tensor(&[3, 2, k, k], &mut r);
        let w3 = apply_transform(&w, &default_transform(k)).unwrap();
        assert_eq!(w3.dims(), &[3, 2, k, k, k]);
        let (k2, k3) = (k * k, k * k * k);
        for f in 0..6 {
            for kz in 0..k {
                for kx in 0..k {
                    for ky in 0..k {
                        assert_eq!(w3.data()[f * k3 + flat3(k, kz, kx, ky)], w.data()[f * k2 + flat2(k, kx, ky)]);
                    }
                }
            }
        }
    }
}

#[test]
fn unit_kernel_is_identity() {
    let w = random_tensor(&[4, 3, 1, 1], &mut rng(2));
    for kind in KINDS {
        let w3 = apply_transform(&w, &handcrafted_transform(kind, 1).unwrap()).unwrap();
        assert_eq!(w3.dims(), &[4, 3, 1, 1, 1]);
        assert_eq!(w3.data(), w.data());
    }
}

#[test]
fn handcrafted_structure_matches_enumeration() {
    for k in 1..=5 {
        let (k2, k3) = (k * k, k * k * k);
        for kind in KINDS {
            let t = handcrafted_transform::<f64>(kind, k).unwrap();
            assert_eq!(t.matrices().dims(), &[k2, k3]);
            let mut expected = vec![0.0; k2 * k3];
            for kz in 0..k {
                for kx in 0..k {
                    for ky in 0..k {
                        let (sx, sy) = source_tap(kind, k, kz, kx, ky);
                        expected[flat2(k, sx, sy) * k3 + flat3(k, kz, kx, ky)] = 1.0;
                    }
                }
            }
            assert_eq!(t.matrices().data(), &expected[..], "{kind:?} K={k}");
            // one source per 3D tap, K entries per 2D tap
            for col in 0..k3 {
                assert_eq!((0..k2).filter(|&row| t.entry(row, col) != 0.0).count(), 1);
            }
            for row in 0..k2 {
                assert_eq!((0..k3).filter(|&col| t.entry(row, col) != 0.0).count(), k, "{kind:?} K={k} row {row}");
            }
        }
    }
}

#[test]
fn handcrafted_transforms_lift_as_enumerated() {
    let k = 3;
    let w = random_tensor(&[2, 2, k, k], &mut rng(3));
    for kind in KINDS {
        let w3 = apply_transform(&w, &handcrafted_transform(kind, k).unwrap()).unwrap();
        for f in 0..4 {
            for kz in 0..k {
                for kx in 0..k {
                    for ky in 0..k {
                        let (sx, sy) = source_tap(kind, k, kz, kx, ky);
                        assert_eq!(w3.data()[f * 27 + flat3(k, kz, kx, ky)], w.data()[f * 9 + flat2(k, sx, sy)]);
                    }
                }
            }
        }
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apply_transform_is_linear(seed in 0u64..10_000, k in 1usize..=4, a in -3.0f64..3.0, b in -3.0f64..3.0, per_filter in any::<bool>()) {
        let mut r = rng(seed);
        let w = random_tensor(&[3, 2, k, k], &mut r);
        let v = random_tensor(&[3, 2, k, k], &mut r);
        let sharing = if per_filter { Sharing::PerFilter } else { Sharing::Shared };
        let t = init_transform::<f64>(TransformInit::Random, k, sharing, (3, 2), seed).unwrap();
        let mix: Vec<f64> = w.data().iter().zip(v.data()).map(|(x, y)| a * x + b * y).collect();
        let lhs = apply_transform(&Tensor::from_vec(&[3, 2, k, k], mix).unwrap(), &t).unwrap();
        let tw = apply_transform(&w, &t).unwrap();
        let tv = apply_transform(&v, &t).unwrap();
        let rhs: Vec<f64> = tw.data().iter().zip(tv.data()).map(|(x, y)| a * x + b * y).collect();
        prop_assert!(max_dev(lhs.data(), &rhs) <= 1e-6);
    }

    #[test]
    fn per_filter_copy_of_shared_agrees(seed in 0u64..10_000) {
        let w = random_tensor(&[2, 3, 3, 3], &mut rng(seed));
        let shared = init_transform::<f64>(TransformInit::Random, 3, Sharing::Shared, (2, 3), seed).unwrap();
        let per = shared.to_per_filter(2, 3).unwrap();
        prop_assert_eq!(apply_transform(&w, &shared).unwrap(), apply_transform(&w, &per).unwrap());
    }
}

fn kernel3_count<'a>(dims: impl Iterator<Item = &'a [usize]>) -> usize {
    dims.filter(|d| d.len() >= 4 && d[2] == 3).map(|d| d.iter().product::<usize>()).sum()
}

#[test]
fn resnet18_inflation_triples_3x3_parameters() {
    let planar = build::<f32>(&ArchSpec::new(ArchKind::ResnetCls, Depth::R18, 3, 10).planar().with_width(1.0).shape_only()).unwrap();
    let volumetric = build::<f32>(&ArchSpec::new(ArchKind::ResnetCls, Depth::R18, 3, 10).with_width(1.0).shape_only()).unwrap();
    let conv = |g: &i2p_core::models::NetworkGraph<f32>| {
        kernel3_count(g.params().iter().filter(|p| p.kind == ParamKind::ConvWeight).map(|p| p.value.dims()))
    };
    let (c2, c3) = (conv(&planar), conv(&volumetric));
    assert!(c2 > 10_000_000, "{c2}");
    assert_eq!(c3, 3 * c2);

    let source = planar.export_archive().unwrap();
    let inflated = inflate_network(&source, &volumetric, &InflationPolicy::uniform(default_transform(3))).unwrap();
    let backbone2d: Vec<Vec<usize>> = planar
        .params()
        .iter()
        .filter(|p| p.role == ParamRole::Backbone && p.kind == ParamKind::ConvWeight)
        .map(|p| p.value.dims().to_vec())
        .collect();
    let lifted: Vec<Vec<usize>> = inflated.records().iter().filter(|r| r.dims.len() == 5).map(|r| r.dims_usize()).collect();
    assert_eq!(kernel3_count(lifted.iter().map(|d| &d[..])), 3 * kernel3_count(backbone2d.iter().map(|d| &d[..])));
}

#[test]
fn inflated_network_copies_batch_norm_and_skips_io_layers() {
    let planar = build::<f32>(&ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 1, 4).planar().with_width(0.125).with_seed(5)).unwrap();
    let source = planar.export_archive().unwrap();
    let mut g = build::<f32>(&ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 3, 4).with_width(0.125).with_seed(6)).unwrap();
    let inflated = inflate_network(&source, &g, &InflationPolicy::handcrafted(TransformKind::T3).unwrap()).unwrap();
    for rec in inflated.records() {
        let p = g.params().by_name(&rec.name).unwrap();
        assert_eq!(p.role, ParamRole::Backbone, "{}", rec.name);
        if p.kind != ParamKind::ConvWeight {
            assert_eq!(rec, source.get(&rec.name).unwrap());
        }
    }
    let expected = g.params().iter().filter(|p| p.role == ParamRole::Backbone).count();
    assert_eq!(inflated.len(), expected);
    let before: Vec<_> = g.params().iter().filter(|p| p.role != ParamRole::Backbone).map(|p| p.value.clone()).collect();
    g.load_archive(&inflated, LoadScope::Backbone).unwrap();
    let after: Vec<_> = g.params().iter().filter(|p| p.role != ParamRole::Backbone).map(|p| p.value.clone()).collect();
    assert_eq!(before, after);
}

#[test]
fn missing_layer_assignment_is_policy_error() {
    let planar = build::<f32>(&ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 1, 2).planar().with_width(0.0625)).unwrap();
    let g = build::<f32>(&ArchSpec::new(ArchKind::ResnetCls, Depth::Tiny, 1, 2).with_width(0.0625)).unwrap();
    let err = inflate_network(&planar.export_archive().unwrap(), &g, &InflationPolicy::new()).unwrap_err();
    assert!(matches!(err, i2p_core::Error::Policy(_)), "{err}");
}

#[test]
fn zero_transform_is_accepted_and_zeroes_weights() {
    let w = random_tensor(&[2, 2, 3, 3], &mut rng(9));
    let t = FilterTransform::new(3, TransformKind::Learned, Sharing::Shared, false, Tensor::zeros(&[9, 27])).unwrap();
    assert!(apply_transform(&w, &t).unwrap().data().iter().all(|&v| v == 0.0));
}
