use std::collections::BTreeMap;

use i2p_core::voxel::{from_dense, majority_voxel_labels, scatter_to_points, to_dense, voxelize, Coord, PointCloud, VoxelBox};
use proptest::prelude::*;

fn cloud() -> impl Strategy<Value = Vec<[f64; 3]>> {
    proptest::collection::vec(proptest::array::uniform3(-2.0f64..2.0), 1..120)
}

proptest! {
    #[test]
    fn voxels_partition_points_and_average_features(pts in cloud(), size in 0.1f64..1.0) {
        let pc = PointCloud::from_positions(pts.clone()).unwrap();
        let (t, map) = voxelize(&pc, size).unwrap();
        let mut groups: BTreeMap<[i32; 3], Vec<usize>> = BTreeMap::new();
        for (i, p) in pts.iter().enumerate() {
            groups.entry(p.map(|v| (v / size).floor() as i32)).or_default().push(i);
        }
        prop_assert_eq!(t.len(), groups.len());
        prop_assert_eq!(map.num_points(), pts.len());
        for (v, (key, members)) in groups.iter().enumerate() {
            prop_assert_eq!(t.coords().coords()[v], Coord::new(0, *key));
            prop_assert_eq!(&map.inverse()[v], &members.iter().map(|&m| m as u32).collect::<Vec<_>>());
            for c in 0..3 {
                let mean = members.iter().map(|&m| pts[m][c]).sum::<f64>() / members.len() as f64;
                prop_assert!((t.feats().get(v, c) as f64 - mean).abs() <= 1e-6);
            }
        }
        for (i, &v) in map.forward().iter().enumerate() {
            prop_assert!(map.inverse()[v as usize].contains(&(i as u32)));
        }
    }

    #[test]
    fn voxel_features_ignore_point_order(pts in cloud(), size in 0.1f64..1.0) {
        let mut rev = pts.clone();
        rev.reverse();
        let (a, _) = voxelize(&PointCloud::from_positions(pts).unwrap(), size).unwrap();
        let (b, _) = voxelize(&PointCloud::from_positions(rev).unwrap(), size).unwrap();
        prop_assert!(a.coords().same_set(b.coords()));
        prop_assert_eq!(a.feats(), b.feats());
    }

    #[test]
    fn dense_round_trip(pts in cloud()) {
        let (t, _) = voxelize(&PointCloud::from_positions(pts).unwrap(), 0.5).unwrap();
        let back = from_dense(&to_dense(&t, VoxelBox::cube(-4, 8)).unwrap(), 0.5, 0).unwrap();
        // zero-feature voxels vanish in the dense view
        for (i, c) in back.coords().coords().iter().enumerate() {
            prop_assert_eq!(t.feature_at(c).unwrap(), back.feats().row(i));
        }
    }
}

#[test]
fn majority_labels_break_ties_low_and_scatter_back() {
    let pts = vec![[0.1, 0.1, 0.1], [0.2, 0.2, 0.2], [0.3, 0.1, 0.2], [0.4, 0.3, 0.1], [1.5, 0.1, 0.1], [1.6, 0.2, 0.3]];
    let pc = PointCloud::new(pts, None, Some(vec![2, 1, 2, 1, 3, 0])).unwrap();
    let (t, map) = voxelize(&pc, 1.0).unwrap();
    assert_eq!(t.len(), 2);
    let labels = majority_voxel_labels(&pc, &map).unwrap();
    assert_eq!(labels, vec![1, 0]);
    assert_eq!(scatter_to_points(&labels, &map).unwrap(), vec![1, 1, 1, 1, 0, 0]);
}

#[test]
fn invalid_inputs_are_rejected() {
    let pc = PointCloud::from_positions(vec![[0.0; 3]]).unwrap();
    assert!(voxelize(&pc, 0.0).is_err());
    assert!(voxelize(&pc, f64::NAN).is_err());
    assert!(PointCloud::from_positions(vec![[f64::INFINITY, 0.0, 0.0]]).is_err() || voxelize(&PointCloud::from_positions(vec![[f64::INFINITY, 0.0, 0.0]]).unwrap(), 1.0).is_err());
    assert!(PointCloud::new(vec![[0.0; 3]], None, Some(vec![1, 2])).is_err());
}
