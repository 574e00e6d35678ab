//! Point clouds, voxel quantization and the sparse voxel tensor.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::Float;

use crate::error::{bail, Result};
use crate::grid::DenseGrid;
use crate::real::Real;
use crate::tensor::Matrix;

/// Unordered points with optional per-point features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    feature_width: usize,
    features: Option<Vec<f64>>,
    labels: Option<Vec<u32>>,
}

impl PointCloud {
    /// `features` is row-major with one row of width `F` per point.
    pub fn new(positions: Vec<[f64; 3]>, features: Option<(usize, Vec<f64>)>, labels: Option<Vec<u32>>) -> Result<Self> {
        if positions.is_empty() {
            bail!(InvalidInput, "point cloud has no points");
        }
        let n = positions.len();
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            bail!(InvalidInput, "point {i} has a non-finite coordinate");
        }
        let (feature_width, features) = match features {
            Some((width, values)) => {
                if width == 0 {
                    bail!(InvalidInput, "feature width must be positive when features are present");
                }
                if values.len() != n * width {
                    bail!(InvalidInput, "expected {} feature values for {n} points of width {width}, got {}", n * width, values.len());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    bail!(InvalidInput, "non-finite point feature");
                }
                (width, Some(values))
            }
            None => (0, None),
        };
        if let Some(l) = &labels {
            if l.len() != n {
                bail!(InvalidInput, "{} labels for {n} points", l.len());
            }
        }
        Ok(Self { positions, feature_width, features, labels })
    }

    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(positions, None, None)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    /// `None` when the cloud carries no feature channels.
    pub fn feature_width(&self) -> Option<usize> {
        self.features.as_ref().map(|_| self.feature_width)
    }

    pub fn features(&self) -> Option<&[f64]> {
        self.features.as_deref()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// Feature row of point `i`; the xyz coordinates when no features exist.
    pub fn feature_row(&self, i: usize) -> &[f64] {
        match &self.features {
            Some(f) => &f[i * self.feature_width..(i + 1) * self.feature_width],
            None => &self.positions[i],
        }
    }

    /// Width of [`Self::feature_row`].
    pub fn effective_feature_width(&self) -> usize {
        self.feature_width().unwrap_or(3)
    }

    pub fn with_positions(&self, positions: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(
            positions,
            self.features.clone().map(|f| (self.feature_width, f)),
            self.labels.clone(),
        )
    }

    pub fn with_labels(self, labels: Option<Vec<u32>>) -> Result<Self> {
        Self::new(self.positions, self.features.map(|f| (self.feature_width, f)), labels)
    }
}

/// Voxel index of an active site. `batch` separates samples composed into one
/// tensor; single-sample tensors use batch 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub batch: u32,
    /// `(x, y, z)` voxel index.
    pub ijk: [i32; 3],
}

impl Coord {
    #[inline]
    pub const fn new(batch: u32, ijk: [i32; 3]) -> Self {
        Self { batch, ijk }
    }
}

/// Unique active coordinates in storage order plus a sorted lookup index.
#[derive(Debug, Clone)]
pub struct CoordSet {
    coords: Vec<Coord>,
    sorted: Vec<u32>,
    stride_level: u32,
    batch_size: usize,
}

impl PartialEq for CoordSet {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords && self.stride_level == other.stride_level && self.batch_size == other.batch_size
    }
}

impl CoordSet {
    pub fn new(coords: Vec<Coord>, stride_level: u32) -> Result<Self> {
        let batch_size = coords.iter().map(|c| c.batch as usize + 1).max().unwrap_or(0);
        Self::with_batch_size(coords, stride_level, batch_size)
    }

    pub fn with_batch_size(coords: Vec<Coord>, stride_level: u32, batch_size: usize) -> Result<Self> {
        if coords.len() > u32::MAX as usize {
            bail!(InvalidInput, "too many coordinates");
        }
        let mut sorted: Vec<u32> = (0..coords.len() as u32).collect();
        if !coords.windows(2).all(|w| w[0] < w[1]) {
            sorted.sort_unstable_by_key(|&i| coords[i as usize]);
            if let Some(w) = sorted.windows(2).find(|w| coords[w[0] as usize] == coords[w[1] as usize]) {
                bail!(InvalidInput, "duplicate coordinate {:?}", coords[w[0] as usize]);
            }
        }
        if let Some(c) = coords.iter().find(|c| c.batch as usize >= batch_size) {
            bail!(InvalidInput, "coordinate {c:?} outside batch of size {batch_size}");
        }
        Ok(Self { coords, sorted, stride_level, batch_size })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    #[inline]
    pub fn stride_level(&self) -> u32 {
        self.stride_level
    }

    #[inline]
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Row index of `c`, if active.
    pub fn index_of(&self, c: &Coord) -> Option<usize> {
        self.sorted
            .binary_search_by(|&i| self.coords[i as usize].cmp(c))
            .ok()
            .map(|pos| self.sorted[pos] as usize)
    }

    /// Set equality irrespective of storage order.
    pub fn same_set(&self, other: &CoordSet) -> bool {
        self.len() == other.len()
            && self
                .sorted
                .iter()
                .zip(&other.sorted)
                .all(|(&a, &b)| self.coords[a as usize] == other.coords[b as usize])
    }

    /// Active rows per batch entry.
    pub fn batch_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.batch_size];
        for c in &self.coords {
            counts[c.batch as usize] += 1;
        }
        counts
    }

    /// Coordinates `floor(c / factor)` deduplicated, in ascending order.
    pub fn downsampled(&self, factor: i32) -> Vec<Coord> {
        let mut out: Vec<Coord> = self
            .coords
            .iter()
            .map(|c| Coord::new(c.batch, c.ijk.map(|v| v.div_euclid(factor))))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Active voxel coordinates paired with one feature row each.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVoxelTensor<S = f32> {
    coords: Arc<CoordSet>,
    feats: Matrix<S>,
    voxel_size: f64,
}

impl<S: Real> SparseVoxelTensor<S> {
    pub fn new(coords: Arc<CoordSet>, feats: Matrix<S>, voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            bail!(InvalidInput, "voxel size must be positive, got {voxel_size}");
        }
        if feats.rows() != coords.len() {
            bail!(Shape, "{} feature rows for {} coordinates", feats.rows(), coords.len());
        }
        Ok(Self { coords, feats, voxel_size })
    }

    /// Single-sample tensor from bare `(x, y, z)` triples.
    pub fn from_triples(triples: &[[i32; 3]], feats: Matrix<S>, voxel_size: f64, stride_level: u32) -> Result<Self> {
        let coords = triples.iter().map(|&ijk| Coord::new(0, ijk)).collect();
        let set = CoordSet::with_batch_size(coords, stride_level, 1)?;
        Self::new(Arc::new(set), feats, voxel_size)
    }

    #[inline]
    pub fn coords(&self) -> &Arc<CoordSet> {
        &self.coords
    }

    #[inline]
    pub fn feats(&self) -> &Matrix<S> {
        &self.feats
    }

    #[inline]
    pub fn into_feats(self) -> Matrix<S> {
        self.feats
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.feats.cols()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    #[inline]
    pub fn stride_level(&self) -> u32 {
        self.coords.stride_level()
    }

    /// Feature row at `c`, if active.
    pub fn feature_at(&self, c: &Coord) -> Option<&[S]> {
        self.coords.index_of(c).map(|r| self.feats.row(r))
    }

    pub fn cast<T: Real>(&self) -> SparseVoxelTensor<T> {
        SparseVoxelTensor { coords: self.coords.clone(), feats: self.feats.cast(), voxel_size: self.voxel_size }
    }

    /// Same coordinates, new features.
    pub fn with_feats(&self, feats: Matrix<S>) -> Result<Self> {
        Self::new(self.coords.clone(), feats, self.voxel_size)
    }

    /// Composes single-sample tensors into one batch; sample `i` gets batch id `i`.
    pub fn collate(samples: &[SparseVoxelTensor<S>]) -> Result<Self> {
        let first = match samples.first() {
            Some(f) => f,
            None => bail!(InvalidInput, "cannot collate an empty batch"),
        };
        let channels = first.channels();
        let level = first.stride_level();
        let total: usize = samples.iter().map(|s| s.len()).sum();
        let mut coords = Vec::with_capacity(total);
        let mut data = Vec::with_capacity(total * channels);
        for (b, s) in samples.iter().enumerate() {
            if s.channels() != channels || s.stride_level() != level {
                bail!(Shape, "sample {b} has {} channels at level {}, expected {channels} at {level}", s.channels(), s.stride_level());
            }
            if s.coords.batch_size() > 1 {
                bail!(InvalidInput, "sample {b} is already a batch");
            }
            coords.extend(s.coords.coords().iter().map(|c| Coord::new(b as u32, c.ijk)));
            data.extend_from_slice(s.feats.data());
        }
        let set = CoordSet::with_batch_size(coords, level, samples.len())?;
        Self::new(Arc::new(set), Matrix::from_vec(total, channels, data)?, first.voxel_size)
    }
}

/// Point-to-voxel assignment and its inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelPointMap {
    forward: Vec<u32>,
    inverse: Vec<Vec<u32>>,
}

impl VoxelPointMap {
    pub fn new(forward: Vec<u32>, inverse: Vec<Vec<u32>>) -> Result<Self> {
        let mut seen = vec![false; forward.len()];
        for (v, members) in inverse.iter().enumerate() {
            for &p in members {
                let p = p as usize;
                if p >= forward.len() || seen[p] || forward[p] as usize != v {
                    bail!(InvalidInput, "inconsistent point map at voxel {v}");
                }
                seen[p] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            bail!(InvalidInput, "point map does not cover every point");
        }
        Ok(Self { forward, inverse })
    }

    /// Voxel row of each point.
    pub fn forward(&self) -> &[u32] {
        &self.forward
    }

    /// Member points of each voxel, ascending.
    pub fn inverse(&self) -> &[Vec<u32>] {
        &self.inverse
    }

    pub fn num_points(&self) -> usize {
        self.forward.len()
    }

    pub fn num_voxels(&self) -> usize {
        self.inverse.len()
    }
}

fn quantize(p: &[f64; 3], voxel_size: f64) -> Result<[i32; 3]> {
    let mut out = [0i32; 3];
    for (o, v) in out.iter_mut().zip(p) {
        let q = Float::floor(v / voxel_size);
        if !(q >= i32::MIN as f64 && q <= i32::MAX as f64) {
            bail!(InvalidInput, "coordinate {v} does not fit the voxel grid at size {voxel_size}");
        }
        *o = q as i32;
    }
    Ok(out)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Quantizes `pc` into voxels of edge `voxel_size`. Each voxel's feature is
/// the mean of its member points' features (xyz when the cloud has none).
/// Voxels are emitted in ascending coordinate order.
pub fn voxelize(pc: &PointCloud, voxel_size: f64) -> Result<(SparseVoxelTensor<f32>, VoxelPointMap)> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        bail!(InvalidInput, "voxel size must be positive, got {voxel_size}");
    }
    if pc.is_empty() {
        bail!(InvalidInput, "point cloud has no points");
    }
    let keys = pc.positions().iter().map(|p| quantize(p, voxel_size)).collect::<Result<Vec<_>>>()?;
    let width = pc.effective_feature_width();

    // Ties inside a voxel are ordered by point content, not input position, so
    // the f64 sums are bitwise independent of point order.
    let mut order: Vec<u32> = (0..pc.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        let (a, b) = (a as usize, b as usize);
        keys[a]
            .cmp(&keys[b])
            .then_with(|| lex_cmp(&pc.positions()[a], &pc.positions()[b]))
            .then_with(|| lex_cmp(pc.feature_row(a), pc.feature_row(b)))
            .then_with(|| a.cmp(&b))
    });

    let mut coords = Vec::new();
    let mut feats = Vec::new();
    let mut inverse: Vec<Vec<u32>> = Vec::new();
    let mut forward = vec![0u32; pc.len()];
    let mut acc = vec![0f64; width];
    let mut start = 0;
    while start < order.len() {
        let key = keys[order[start] as usize];
        let mut end = start;
        acc.iter_mut().for_each(|a| *a = 0.0);
        while end < order.len() && keys[order[end] as usize] == key {
            for (a, f) in acc.iter_mut().zip(pc.feature_row(order[end] as usize)) {
                *a += f;
            }
            end += 1;
        }
        let n = (end - start) as f64;
        let voxel = coords.len() as u32;
        coords.push(Coord::new(0, key));
        feats.extend(acc.iter().map(|a| (a / n) as f32));
        let mut members: Vec<u32> = order[start..end].to_vec();
        members.sort_unstable();
        for &m in &members {
            forward[m as usize] = voxel;
        }
        inverse.push(members);
        start = end;
    }
    let rows = coords.len();
    let set = CoordSet::with_batch_size(coords, 0, 1)?;
    let tensor = SparseVoxelTensor::new(Arc::new(set), Matrix::from_vec(rows, width, feats)?, voxel_size)?;
    Ok((tensor, VoxelPointMap { forward, inverse }))
}

/// Most frequent member label per voxel; ties go to the smallest class id.
pub fn majority_voxel_labels(pc: &PointCloud, map: &VoxelPointMap) -> Result<Vec<u32>> {
    let labels = match pc.labels() {
        Some(l) => l,
        None => bail!(InvalidInput, "point cloud has no labels"),
    };
    if map.num_points() != pc.len() {
        bail!(InvalidInput, "map covers {} points, cloud has {}", map.num_points(), pc.len());
    }
    let mut scratch: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(map.num_voxels());
    for members in map.inverse() {
        scratch.clear();
        scratch.extend(members.iter().map(|&p| labels[p as usize]));
        scratch.sort_unstable();
        let mut best = (0usize, 0u32);
        let mut i = 0;
        while i < scratch.len() {
            let mut j = i;
            while j < scratch.len() && scratch[j] == scratch[i] {
                j += 1;
            }
            // Ascending label order: strict `>` keeps the smallest id on ties.
            if j - i > best.0 {
                best = (j - i, scratch[i]);
            }
            i = j;
        }
        out.push(best.1);
    }
    Ok(out)
}

/// Copies each voxel prediction onto its member points.
pub fn scatter_to_points(voxel_preds: &[u32], map: &VoxelPointMap) -> Result<Vec<u32>> {
    if voxel_preds.len() != map.num_voxels() {
        bail!(InvalidInput, "{} predictions for {} voxels", voxel_preds.len(), map.num_voxels());
    }
    Ok(map.forward().iter().map(|&v| voxel_preds[v as usize]).collect())
}

/// Axis-aligned integer box in `(x, y, z)` voxel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelBox {
    pub min: [i32; 3],
    pub extent: [usize; 3],
}

impl VoxelBox {
    pub fn cube(min: i32, size: usize) -> Self {
        Self { min: [min; 3], extent: [size; 3] }
    }

    /// Dense index `(d, h, w)` = `(z, x, y)` of an `(x, y, z)` voxel, if inside.
    pub fn locate(&self, ijk: [i32; 3]) -> Option<[usize; 3]> {
        let mut rel = [0usize; 3];
        for a in 0..3 {
            let r = ijk[a] as i64 - self.min[a] as i64;
            if r < 0 || r >= self.extent[a] as i64 {
                return None;
            }
            rel[a] = r as usize;
        }
        Some([rel[2], rel[0], rel[1]])
    }

    /// Dense `[D, H, W]` shape.
    pub fn dense_shape(&self) -> [usize; 3] {
        [self.extent[2], self.extent[0], self.extent[1]]
    }

    /// `min` in the grid-origin convention of [`DenseGrid`].
    pub fn origin(&self) -> [i32; 3] {
        self.min
    }
}

/// Zero-filled dense view of a single-sample tensor.
pub fn to_dense<S: Real>(t: &SparseVoxelTensor<S>, bounds: VoxelBox) -> Result<DenseGrid<S>> {
    if t.coords().batch_size() > 1 {
        bail!(InvalidInput, "to_dense expects a single sample");
    }
    let mut grid = DenseGrid::zeros(t.channels(), bounds.dense_shape(), bounds.origin());
    for (row, c) in t.coords().coords().iter().enumerate() {
        let [d, h, w] = match bounds.locate(c.ijk) {
            Some(i) => i,
            None => bail!(InvalidInput, "coordinate {:?} outside bounds {bounds:?}", c.ijk),
        };
        for (ch, &v) in t.feats().row(row).iter().enumerate() {
            grid.set(ch, d, h, w, v);
        }
    }
    Ok(grid)
}

/// Sparse view of a dense grid: cells with any nonzero channel become active,
/// in ascending coordinate order.
pub fn from_dense<S: Real>(grid: &DenseGrid<S>, voxel_size: f64, stride_level: u32) -> Result<SparseVoxelTensor<S>> {
    let [d, h, w] = grid.shape();
    let o = grid.origin();
    let mut cells = Vec::new();
    for z in 0..d {
        for x in 0..h {
            for y in 0..w {
                if (0..grid.channels()).any(|c| grid.get(c, z, x, y) != S::zero()) {
                    cells.push(([o[0] + x as i32, o[1] + y as i32, o[2] + z as i32], [z, x, y]));
                }
            }
        }
    }
    cells.sort_unstable_by_key(|c| c.0);
    let mut data = Vec::with_capacity(cells.len() * grid.channels());
    for (_, [z, x, y]) in &cells {
        data.extend((0..grid.channels()).map(|c| grid.get(c, *z, *x, *y)));
    }
    let rows = cells.len();
    let triples: Vec<[i32; 3]> = cells.into_iter().map(|c| c.0).collect();
    SparseVoxelTensor::from_triples(&triples, Matrix::from_vec(rows, grid.channels(), data)?, voxel_size, stride_level)
        .map_err(|e| crate::Error::InvalidInput(format!("from_dense: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f64; 3]], feats: Option<&[f64]>) -> PointCloud {
        PointCloud::new(points.to_vec(), feats.map(|f| (f.len() / points.len(), f.to_vec())), None).unwrap()
    }

    #[test]
    fn colocated_points_average() {
        let pc = cloud(&[[0.01, 0.01, 0.01], [0.04, 0.04, 0.04]], Some(&[1.0, 3.0]));
        let (t, map) = voxelize(&pc, 0.05).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.coords().coords()[0].ijk, [0, 0, 0]);
        assert_eq!(t.feats().row(0), &[2.0]);
        assert_eq!(map.inverse(), &[vec![0, 1]]);
    }

    #[test]
    fn negative_coordinates_floor() {
        let pc = cloud(&[[-0.01, 0.06, 0.0]], None);
        let (t, _) = voxelize(&pc, 0.05).unwrap();
        assert_eq!(t.coords().coords()[0].ijk, [-1, 1, 0]);
        assert_eq!(t.channels(), 3);
    }

    #[test]
    fn voxelize_errors() {
        assert!(matches!(PointCloud::from_positions(vec![]), Err(crate::Error::InvalidInput(_))));
        assert!(matches!(PointCloud::from_positions(vec![[f64::NAN, 0.0, 0.0]]), Err(crate::Error::InvalidInput(_))));
        let pc = cloud(&[[0.0; 3]], None);
        assert!(voxelize(&pc, 0.0).is_err());
        assert!(voxelize(&pc, -1.0).is_err());
    }

    #[test]
    fn majority_and_ties() {
        let pts = [[0.0; 3], [0.01; 3], [0.02; 3], [1.0; 3], [1.01; 3]];
        let pc = PointCloud::new(pts.to_vec(), None, Some(vec![2, 5, 2, 3, 1])).unwrap();
        let (_, map) = voxelize(&pc, 0.5).unwrap();
        assert_eq!(majority_voxel_labels(&pc, &map).unwrap(), vec![2, 1]);
        let unlabeled = cloud(&pts, None);
        assert!(majority_voxel_labels(&unlabeled, &map).is_err());
    }

    #[test]
    fn scatter_round_trip() {
        let pc = cloud(&[[0.0; 3], [0.1; 3], [0.2; 3]], None);
        let (_, map) = voxelize(&pc, 1.0).unwrap();
        assert_eq!(scatter_to_points(&[7], &map).unwrap(), vec![7, 7, 7]);
        assert!(scatter_to_points(&[7, 8], &map).is_err());
    }

    #[test]
    fn dense_single_voxel_and_empty() {
        let t = SparseVoxelTensor::from_triples(&[[0, 0, 0]], Matrix::from_vec(1, 1, vec![5.0f32]).unwrap(), 1.0, 0).unwrap();
        let g = to_dense(&t, VoxelBox::cube(0, 2)).unwrap();
        assert_eq!(g.values()[0], 5.0);
        assert!(g.values()[1..].iter().all(|&v| v == 0.0));
        let empty = SparseVoxelTensor::from_triples(&[], Matrix::<f32>::zeros(0, 2), 1.0, 0).unwrap();
        let g = to_dense(&empty, VoxelBox::cube(0, 3)).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert!(to_dense(&t, VoxelBox::cube(1, 2)).is_err());
    }

    #[test]
    fn duplicate_coords_rejected() {
        let r = SparseVoxelTensor::from_triples(&[[1, 2, 3], [1, 2, 3]], Matrix::<f32>::zeros(2, 1), 1.0, 0);
        assert!(r.is_err());
    }

    #[test]
    fn collate_assigns_batches() {
        let a = SparseVoxelTensor::from_triples(&[[0, 0, 0]], Matrix::from_vec(1, 1, vec![1.0f32]).unwrap(), 1.0, 0).unwrap();
        let b = SparseVoxelTensor::from_triples(&[[0, 0, 0], [1, 0, 0]], Matrix::from_vec(2, 1, vec![2.0, 3.0]).unwrap(), 1.0, 0).unwrap();
        let batch = SparseVoxelTensor::collate(&[a, b]).unwrap();
        assert_eq!(batch.coords().batch_size(), 2);
        assert_eq!(batch.coords().batch_counts(), vec![1, 2]);
        assert_eq!(batch.feature_at(&Coord::new(1, [1, 0, 0])), Some(&[3.0f32][..]));
    }
}
