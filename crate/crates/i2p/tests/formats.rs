use std::sync::Arc;

use i2p::cloud::{format_pointcloud, parse_pointcloud};
use i2p::i2pw::{read_archive, write_archive, HEADER_LEN};
use i2p::svt::{read_svt, write_svt};
use i2p::Error;
use i2p_core::archive::{ArchiveTensor, Dimensionality, WeightArchive};
use i2p_core::voxel::{Coord, CoordSet, PointCloud, SparseVoxelTensor};
use i2p_core::Matrix;
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite())
}

fn archive() -> impl Strategy<Value = WeightArchive> {
    let record = (proptest::collection::vec(0u64..4, 0..4), "[a-z][a-z0-9._]{0,12}");
    (any::<bool>(), proptest::collection::vec(record, 0..5)).prop_flat_map(|(planar, recs)| {
        let bodies: Vec<_> = recs
            .into_iter()
            .map(|(dims, name)| {
                let n = dims.iter().product::<u64>() as usize;
                (Just(dims), Just(name), proptest::collection::vec(finite_f32(), n))
            })
            .collect();
        bodies.prop_map(move |recs| {
            let mut a = WeightArchive::new(if planar { Dimensionality::Source2d } else { Dimensionality::Inflated3d });
            for (i, (dims, name, values)) in recs.into_iter().enumerate() {
                a.insert(ArchiveTensor { name: format!("{name}{i}"), dims, values }).unwrap();
            }
            a
        })
    })
}

fn sparse() -> impl Strategy<Value = SparseVoxelTensor<f32>> {
    (proptest::collection::btree_set(proptest::array::uniform3(-1000i32..1000), 0..24), 0usize..4, 1u32..64).prop_flat_map(|(set, ch, vs)| {
        let coords: Vec<[i32; 3]> = set.into_iter().collect();
        let n = coords.len();
        (Just(coords), proptest::collection::vec(finite_f32(), n * ch)).prop_map(move |(coords, feats)| {
            let set = CoordSet::with_batch_size(coords.iter().map(|&c| Coord::new(0, c)).collect(), 0, 1).unwrap();
            SparseVoxelTensor::new(Arc::new(set), Matrix::from_vec(n, ch, feats).unwrap(), vs as f64 / 16.0).unwrap()
        })
    })
}

fn bits(a: &WeightArchive) -> Vec<(String, Vec<u64>, Vec<u32>)> {
    a.records().iter().map(|r| (r.name.clone(), r.dims.clone(), r.values.iter().map(|v| v.to_bits()).collect())).collect()
}

proptest! {
    #[test]
    fn archive_round_trip_is_bit_exact(a in archive()) {
        let bytes = write_archive(&a);
        let back = read_archive(&bytes).unwrap();
        prop_assert_eq!(back.dimensionality(), a.dimensionality());
        prop_assert_eq!(bits(&back), bits(&a));
        prop_assert_eq!(write_archive(&back), bytes);
    }

    #[test]
    fn archive_byte_flips_are_detected(a in archive(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        prop_assume!(!a.is_empty());
        let mut bytes = write_archive(&a);
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(read_archive(&bytes).is_err());
    }

    #[test]
    fn archive_truncation_is_detected(a in archive(), cut in any::<prop::sample::Index>()) {
        let bytes = write_archive(&a);
        let n = cut.index(bytes.len());
        prop_assert!(read_archive(&bytes[..n]).is_err());
    }

    #[test]
    fn svt_round_trip_is_bit_exact(t in sparse()) {
        let bytes = write_svt(&t).unwrap();
        let back = read_svt(&bytes).unwrap();
        prop_assert_eq!(back.coords().coords(), t.coords().coords());
        prop_assert_eq!(back.voxel_size(), t.voxel_size());
        prop_assert_eq!(write_svt(&back).unwrap(), bytes);
    }

    #[test]
    fn svt_byte_flips_and_truncation_are_detected(t in sparse(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut bytes = write_svt(&t).unwrap();
        let i = pos.index(bytes.len());
        prop_assert!(read_svt(&bytes[..i]).is_err());
        bytes[i] ^= flip;
        prop_assert!(read_svt(&bytes).is_err());
    }

    #[test]
    fn point_cloud_text_round_trips(
        pts in proptest::collection::vec(proptest::array::uniform3(-1e6f64..1e6), 1..40),
        feat in 0usize..3,
        labelled in any::<bool>(),
    ) {
        let n = pts.len();
        let features = (feat > 0).then(|| (feat, (0..n * feat).map(|i| (i as f64).sqrt() / 7.0).collect()));
        let labels = labelled.then(|| (0..n as u32).map(|i| i % 5).collect());
        let pc = PointCloud::new(pts, features, labels).unwrap();
        let text = format_pointcloud(&pc);
        prop_assert_eq!(parse_pointcloud("p", &text).unwrap(), pc);
    }
}

#[test]
fn empty_archive_is_the_bare_header() {
    let bytes = write_archive(&WeightArchive::new(Dimensionality::Inflated3d));
    assert_eq!(bytes.len(), HEADER_LEN);
    assert_eq!(&bytes, b"I2PW\x01\0\0\0\0\0\0\0\x03");
    assert!(read_archive(&bytes).unwrap().is_empty());
}

#[test]
fn single_tensor_layout() {
    let mut a = WeightArchive::new(Dimensionality::Source2d);
    a.insert(ArchiveTensor { name: "w".into(), dims: vec![2, 2], values: vec![1.0, -2.0, 0.5, 0.0] }).unwrap();
    let bytes = write_archive(&a);
    let mut expect = b"I2PW\x01\0\0\0\x01\0\0\0\x02".to_vec();
    let rec_start = expect.len();
    expect.extend_from_slice(&1u32.to_le_bytes());
    expect.push(b'w');
    expect.push(0);
    expect.extend_from_slice(&2u32.to_le_bytes());
    expect.extend_from_slice(&2u64.to_le_bytes());
    expect.extend_from_slice(&2u64.to_le_bytes());
    for v in [1.0f32, -2.0, 0.5, 0.0] {
        expect.extend_from_slice(&v.to_le_bytes());
    }
    let mut h = crc32fast::Hasher::new();
    h.update(&expect[..HEADER_LEN]);
    h.update(&expect[rec_start..]);
    expect.extend_from_slice(&h.finalize().to_le_bytes());
    assert_eq!(bytes, expect);
    assert_eq!(bytes.len(), 13 + 4 + 1 + 1 + 4 + 16 + 16 + 4);
}

#[test]
fn every_single_byte_flip_of_a_small_archive_is_caught() {
    let mut a = WeightArchive::new(Dimensionality::Inflated3d);
    a.insert(ArchiveTensor { name: "conv1.weight".into(), dims: vec![2, 1, 3], values: vec![0.25; 6] }).unwrap();
    a.insert(ArchiveTensor { name: "fc.bias".into(), dims: vec![2], values: vec![-1.0, 3.0] }).unwrap();
    let bytes = write_archive(&a);
    for i in 0..bytes.len() {
        for flip in [0x01u8, 0x80, 0xff] {
            let mut b = bytes.clone();
            b[i] ^= flip;
            assert!(read_archive(&b).is_err(), "flip {flip:#x} at byte {i} went unnoticed");
        }
    }
    let mut b = bytes.clone();
    let last = b.len() - 10;
    b[last] ^= 0x40;
    assert!(matches!(read_archive(&b), Err(Error::Corruption { tensor, .. }) if tensor == "fc.bias"));
}

#[test]
fn malformed_archives_are_rejected() {
    assert!(read_archive(b"").is_err());
    assert!(read_archive(b"I2PX\x01\0\0\0\0\0\0\0\x03").is_err());
    assert!(read_archive(b"I2PW\x02\0\0\0\0\0\0\0\x03").is_err());
    assert!(read_archive(b"I2PW\x01\0\0\0\0\0\0\0\x07").is_err());
    let mut trailing = write_archive(&WeightArchive::new(Dimensionality::Source2d));
    trailing.push(0);
    assert!(read_archive(&trailing).is_err());
    let mut huge = b"I2PW\x01\0\0\0\x01\0\0\0\x02".to_vec();
    huge.extend_from_slice(&u32::MAX.to_le_bytes());
    assert!(read_archive(&huge).is_err());
}

#[test]
fn svt_rejects_unrepresentable_tensors() {
    let coords = [[0, 0, 0], [1, 2, 3]];
    let t = SparseVoxelTensor::from_triples(&coords, Matrix::from_vec(2, 1, vec![1.0f32, 2.0]).unwrap(), 0.1, 0).unwrap();
    assert!(write_svt(&t).is_err(), "0.1 has no exact f32 form");
    let t = SparseVoxelTensor::from_triples(&coords, Matrix::from_vec(2, 1, vec![1.0f32, 2.0]).unwrap(), 0.25, 0).unwrap();
    let bytes = write_svt(&t).unwrap();
    assert_eq!(bytes.len(), 20 + 2 * 12 + 2 * 4 + 4);
    assert_eq!(&bytes[..4], b"I2PS");
    let batched = SparseVoxelTensor::collate(&[t.clone(), t]).unwrap();
    assert!(write_svt(&batched).is_err());
}

#[test]
fn cloud_text_with_labels() {
    let pc = parse_pointcloud("s", "#cols xyz label\n0 0 0 1\n\n0.5 -1 2e1 3\n").unwrap();
    assert_eq!(pc.positions(), &[[0.0, 0.0, 0.0], [0.5, -1.0, 20.0]]);
    assert_eq!(pc.labels(), Some(&[1u32, 3][..]));
    let pc = parse_pointcloud("s", "#cols xyz f2\n1 2 3 4 5\n").unwrap();
    assert_eq!(pc.feature_row(0), &[4.0, 5.0]);
}

fn parse_err(text: &str) -> (usize, usize, String) {
    match parse_pointcloud("in.pts", text) {
        Err(Error::Parse { line, column, msg, source_name }) => {
            assert_eq!(source_name, "in.pts");
            (line, column, msg)
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

fn at(text: &str) -> (usize, usize) {
    let (l, c, _) = parse_err(text);
    (l, c)
}

#[test]
fn cloud_errors_carry_line_and_column() {
    assert_eq!(at("0 0 0\n"), (1, 1));
    assert_eq!(at(""), (1, 1));
    assert_eq!(at("#cols xyz f0\n0 0 0\n"), (1, 11));
    assert_eq!(at("#cols xyz rgb\n0 0 0\n"), (1, 11));

    let (line, col, msg) = parse_err("#cols xyz\n0 0 0\n1 nan 0\n");
    assert_eq!((line, col), (3, 3));
    assert!(msg.contains("non-finite"), "{msg}");
    let (line, col, msg) = parse_err("#cols xyz label\n0 0 0 1\n0 0 0 -2\n");
    assert_eq!((line, col), (3, 7));
    assert!(msg.contains("class id"), "{msg}");
    let (line, col, _) = parse_err("#cols xyz\n0 0 0 9\n");
    assert_eq!((line, col), (2, 7));
    let (line, col, _) = parse_err("#cols xyz\n  0 0\n");
    assert_eq!((line, col), (2, 6));
    assert_eq!(parse_err("#cols xyz\n\n").0, 2);
}
