//! 3D voxel-grid types and the spatial operations of the pipeline: box
//! smoothing, mask shrinkage, connected-component clustering, and group
//! mean-direction maps.
//!
//! Volumes are stored x-fastest: `index = x + nx * (y + ny * z)`. The mm
//! spacing is carried along for file round-trips but plays no role in the
//! box smoother, which is defined in voxel units.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::UnitAxis;
use crate::watson::ScatterMatrix;
use crate::AxisSample;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum VolumeError {
    #[error("grid dimensions must all be >= 1")]
    EmptyGrid,
    #[error("voxel spacing must be positive and finite")]
    InvalidSpacing,
    #[error("geometries differ: {0:?} vs {1:?}")]
    GeometryMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("data length {got} does not match grid size {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("box kernel size must be odd, got {0}")]
    EvenKernel(usize),
    #[error("at least one volume is required")]
    NoVolumes,
}

/// Grid dimensions and physical spacing in mm per voxel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing: [f64; 3],
}

impl GridGeometry {
    pub fn new(nx: usize, ny: usize, nz: usize, spacing: [f64; 3]) -> Result<Self, VolumeError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VolumeError::EmptyGrid);
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VolumeError::InvalidSpacing);
        }
        Ok(GridGeometry { nx, ny, nz, spacing })
    }

    /// Cube with unit spacing; convenient for simulations where mm are
    /// irrelevant.
    pub fn cubic(n: usize) -> Result<Self, VolumeError> {
        GridGeometry::new(n, n, n, [1.0, 1.0, 1.0])
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.nx;
        let y = (index / self.nx) % self.ny;
        let z = index / (self.nx * self.ny);
        (x, y, z)
    }

    pub fn same_grid(&self, other: &GridGeometry) -> Result<(), VolumeError> {
        if self.dims() != other.dims() {
            return Err(VolumeError::GeometryMismatch(self.dims(), other.dims()));
        }
        Ok(())
    }
}

/// Scalar field over a grid; non-finite values mark undefined voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct StatisticVolume {
    geometry: GridGeometry,
    data: Vec<f64>,
}

impl StatisticVolume {
    pub fn filled(geometry: GridGeometry, value: f64) -> Self {
        let n = geometry.len();
        StatisticVolume { geometry, data: vec![value; n] }
    }

    pub fn from_data(geometry: GridGeometry, data: Vec<f64>) -> Result<Self, VolumeError> {
        if data.len() != geometry.len() {
            return Err(VolumeError::LengthMismatch { got: data.len(), expected: geometry.len() });
        }
        Ok(StatisticVolume { geometry, data })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, index: usize) -> f64 {
        self.data[index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.data[index] = value;
    }

    /// Finite values at masked voxels, in index order.
    pub fn masked_values(&self, mask: &Mask) -> Vec<f64> {
        mask.indices()
            .map(|i| self.data[i])
            .filter(|v| v.is_finite())
            .collect()
    }
}

/// Axis field over a grid; a non-finite triple marks an undefined voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionVolume {
    geometry: GridGeometry,
    axes: Vec<[f64; 3]>,
}

impl DirectionVolume {
    pub fn undefined(geometry: GridGeometry) -> Self {
        let n = geometry.len();
        DirectionVolume { geometry, axes: vec![[f64::NAN; 3]; n] }
    }

    pub fn from_raw(geometry: GridGeometry, axes: Vec<[f64; 3]>) -> Result<Self, VolumeError> {
        if axes.len() != geometry.len() {
            return Err(VolumeError::LengthMismatch { got: axes.len(), expected: geometry.len() });
        }
        Ok(DirectionVolume { geometry, axes })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn raw(&self) -> &[[f64; 3]] {
        &self.axes
    }

    pub fn axis(&self, index: usize) -> Option<UnitAxis> {
        let v = self.axes[index];
        if v.iter().all(|c| c.is_finite()) {
            UnitAxis::new(v).ok()
        } else {
            None
        }
    }

    pub fn set_axis(&mut self, index: usize, axis: Option<UnitAxis>) {
        self.axes[index] = match axis {
            Some(a) => a.components(),
            None => [f64::NAN; 3],
        };
    }
}

/// Boolean membership field: the search region of the analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    geometry: GridGeometry,
    membership: Vec<bool>,
    count: usize,
}

impl Mask {
    pub fn all(geometry: GridGeometry) -> Self {
        let n = geometry.len();
        Mask { geometry, membership: vec![true; n], count: n }
    }

    pub fn from_membership(geometry: GridGeometry, membership: Vec<bool>) -> Result<Self, VolumeError> {
        if membership.len() != geometry.len() {
            return Err(VolumeError::LengthMismatch {
                got: membership.len(),
                expected: geometry.len(),
            });
        }
        let count = membership.iter().filter(|&&m| m).count();
        Ok(Mask { geometry, membership, count })
    }

    pub fn from_indices(geometry: GridGeometry, indices: &[usize]) -> Result<Self, VolumeError> {
        let mut membership = vec![false; geometry.len()];
        for &i in indices {
            if i >= membership.len() {
                return Err(VolumeError::LengthMismatch { got: i, expected: geometry.len() });
            }
            membership[i] = true;
        }
        Mask::from_membership(geometry, membership)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    /// Number of voxels in the mask.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, index: usize) -> bool {
        self.membership[index]
    }

    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.membership
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask, VolumeError> {
        self.geometry.same_grid(&other.geometry)?;
        let membership: Vec<bool> = self
            .membership
            .iter()
            .zip(&other.membership)
            .map(|(&a, &b)| a && b)
            .collect();
        Mask::from_membership(self.geometry, membership)
    }
}

/// Locally averages a statistic map with a centered `b x b x b` box kernel.
///
/// The average runs over the full (unmasked) array. Windows that touch the
/// array boundary or cover any non-finite value produce a non-finite output
/// voxel; `b = 1` is the identity. Implemented as three separable sliding
/// one-dimensional passes, O(voxels) per axis.
pub fn box_smooth(vol: &StatisticVolume, b: usize) -> Result<StatisticVolume, VolumeError> {
    if b % 2 == 0 {
        return Err(VolumeError::EvenKernel(b));
    }
    if b == 1 {
        return Ok(vol.clone());
    }
    let geom = vol.geometry;
    let r = b / 2;
    let (nx, ny, nz) = geom.dims();
    let slab = nx * ny;

    let mut current = vol.data.clone();
    let mut next = vec![f64::NAN; current.len()];

    // pass along x: contiguous lines
    for (out, line) in next.chunks_mut(nx).zip(current.chunks(nx)) {
        slide_window(line, out, 1, nx, b, r);
    }
    std::mem::swap(&mut current, &mut next);

    // pass along y: stride nx within each z-slab
    for z in 0..nz {
        let base = z * slab;
        for x in 0..nx {
            slide_window(&current[base + x..], &mut next[base + x..], nx, ny, b, r);
        }
    }
    std::mem::swap(&mut current, &mut next);

    // pass along z: stride nx*ny
    for xy in 0..slab {
        slide_window(&current[xy..], &mut next[xy..], slab, nz, b, r);
    }

    StatisticVolume::from_data(geom, next)
}

/// Sliding-window mean over `count` elements spaced `stride` apart.
///
/// A running non-finite counter keeps the sum valid: NaN never enters the
/// accumulator, so subtracting elements on exit stays exact.
fn slide_window(input: &[f64], output: &mut [f64], stride: usize, count: usize, b: usize, r: usize) {
    if count < b {
        for i in 0..count {
            output[i * stride] = f64::NAN;
        }
        return;
    }
    let get = |i: usize| input[i * stride];
    let mut sum = 0.0f64;
    let mut bad = 0usize;
    for i in 0..b {
        let v = get(i);
        if v.is_finite() {
            sum += v;
        } else {
            bad += 1;
        }
    }
    let inv = 1.0 / b as f64;
    for i in 0..r {
        output[i * stride] = f64::NAN;
        output[(count - 1 - i) * stride] = f64::NAN;
    }
    for i in r..count - r {
        output[i * stride] = if bad == 0 { sum * inv } else { f64::NAN };
        // advance the window, now covering [i - r, i + r], to center i + 1
        if i + 1 < count - r {
            let v = get(i + r + 1);
            if v.is_finite() {
                sum += v;
            } else {
                bad += 1;
            }
            let v = get(i - r);
            if v.is_finite() {
                sum -= v;
            } else {
                bad -= 1;
            }
        }
    }
}

/// Restricts a mask to voxels where the smoothed statistic stayed finite.
pub fn shrink_mask(mask: &Mask, smoothed: &StatisticVolume) -> Result<Mask, VolumeError> {
    mask.geometry.same_grid(&smoothed.geometry)?;
    let membership: Vec<bool> = mask
        .membership
        .iter()
        .zip(&smoothed.data)
        .map(|(&m, v)| m && v.is_finite())
        .collect();
    Mask::from_membership(mask.geometry, membership)
}

/// Disjoint clusters of selected voxels under 26-neighbor adjacency,
/// ordered by decreasing size (ties broken by smallest member index).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    clusters: Vec<Vec<usize>>,
}

impl ClusterSet {
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }
}

/// Groups selected voxels into 26-connected components.
pub fn extract_clusters(selected: &[usize], geometry: &GridGeometry) -> ClusterSet {
    let mut in_selection = vec![false; geometry.len()];
    for &i in selected {
        in_selection[i] = true;
    }
    let mut visited = vec![false; geometry.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut ordered: Vec<usize> = selected.to_vec();
    ordered.sort_unstable();
    ordered.dedup();
    for &start in &ordered {
        if visited[start] {
            continue;
        }
        let mut component = Vec::new();
        let mut queue = vec![start];
        visited[start] = true;
        while let Some(v) = queue.pop() {
            component.push(v);
            let (x, y, z) = geometry.coords(v);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let (qx, qy, qz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                        if qx < 0
                            || qy < 0
                            || qz < 0
                            || qx >= geometry.nx as i64
                            || qy >= geometry.ny as i64
                            || qz >= geometry.nz as i64
                        {
                            continue;
                        }
                        let idx = geometry.index(qx as usize, qy as usize, qz as usize);
                        if in_selection[idx] && !visited[idx] {
                            visited[idx] = true;
                            queue.push(idx);
                        }
                    }
                }
            }
        }
        component.sort_unstable();
        clusters.push(component);
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    ClusterSet { clusters }
}

/// Per-voxel group mean axes plus the voxels where the mean is undefined
/// (missing data or non-identifiable principal axis).
#[derive(Clone, Debug)]
pub struct MeanDirectionMap {
    pub directions: DirectionVolume,
    pub degenerate: Vec<usize>,
}

/// Mean-direction map of a group: at every masked voxel, the principal axis
/// of the scatter matrix of the subjects' axes.
pub fn group_mean_direction_map(
    volumes: &[DirectionVolume],
    mask: &Mask,
) -> Result<MeanDirectionMap, VolumeError> {
    if volumes.is_empty() {
        return Err(VolumeError::NoVolumes);
    }
    for v in volumes {
        v.geometry.same_grid(&mask.geometry)?;
    }
    let geometry = mask.geometry;
    let results: Vec<Option<UnitAxis>> = (0..geometry.len())
        .into_par_iter()
        .map(|idx| {
            if !mask.contains(idx) {
                return None;
            }
            let axes: Option<Vec<UnitAxis>> = volumes.iter().map(|v| v.axis(idx)).collect();
            let axes = axes?;
            if axes.len() == 1 {
                return Some(axes[0]);
            }
            let sample = AxisSample::new(axes).ok()?;
            ScatterMatrix::from_sample(&sample)
                .principal_axis()
                .ok()
                .map(|(_, axis)| axis)
        })
        .collect();
    let mut directions = DirectionVolume::undefined(geometry);
    let mut degenerate = Vec::new();
    for (idx, axis) in results.into_iter().enumerate() {
        match axis {
            Some(a) => directions.set_axis(idx, Some(a)),
            None => {
                if mask.contains(idx) {
                    degenerate.push(idx);
                }
            }
        }
    }
    Ok(MeanDirectionMap { directions, degenerate })
}
