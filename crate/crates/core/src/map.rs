//! Dense voxel occupancy map with constant-time box queries.

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::geometry::{Aabb, Vec3, GEOM_EPS};

/// Obstacle box as it appears in the map file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// On-disk map format. Obstacles are rasterized on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    /// Individually occupied voxel indices.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub voxels: Vec<[usize; 3]>,
}

#[derive(Debug, Clone)]
pub struct VoxelMap {
    origin: Vec3,
    voxel_size: f64,
    dims: [usize; 3],
    occupancy: Vec<bool>,
    // (nx+1)(ny+1)(nz+1) inclusive prefix counts of occupied cells
    prefix: Vec<u32>,
}

impl VoxelMap {
    pub fn new(origin: Vec3, voxel_size: f64, dims: [usize; 3], occupancy: Vec<bool>) -> Result<Self, ScenarioError> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(ScenarioError::InvalidMap(format!("voxel_size must be positive, got {voxel_size}")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(ScenarioError::InvalidMap(format!("dims must be positive, got {dims:?}")));
        }
        if occupancy.len() != dims[0] * dims[1] * dims[2] {
            return Err(ScenarioError::InvalidMap(format!(
                "occupancy has {} cells, dims {:?} need {}",
                occupancy.len(),
                dims,
                dims[0] * dims[1] * dims[2]
            )));
        }
        let mut map = Self { origin, voxel_size, dims, occupancy, prefix: Vec::new() };
        map.rebuild_prefix();
        Ok(map)
    }

    pub fn empty(origin: Vec3, voxel_size: f64, dims: [usize; 3]) -> Result<Self, ScenarioError> {
        Self::new(origin, voxel_size, dims, vec![false; dims[0] * dims[1] * dims[2]])
    }

    pub fn from_file(file: &MapFile) -> Result<Self, ScenarioError> {
        let origin = Vec3::from(file.origin);
        let mut map = Self::empty(origin, file.voxel_size, file.dims)?;
        for b in &file.boxes {
            let aabb = Aabb::new(Vec3::from(b.min), Vec3::from(b.max));
            if !aabb.is_well_formed() {
                return Err(ScenarioError::InvalidMap(format!("obstacle box {b:?} has min > max")));
            }
            map.mark_box(&aabb);
        }
        for v in &file.voxels {
            if (0..3).any(|a| v[a] >= file.dims[a]) {
                return Err(ScenarioError::InvalidMap(format!("voxel {v:?} outside dims {:?}", file.dims)));
            }
            let idx = map.linear(v[0], v[1], v[2]);
            map.occupancy[idx] = true;
        }
        map.rebuild_prefix();
        Ok(map)
    }

    /// Map file listing every occupied voxel; reloading it reproduces this map exactly.
    pub fn to_file(&self) -> MapFile {
        let mut voxels = Vec::new();
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    if self.is_occupied(i, j, k) {
                        voxels.push([i, j, k]);
                    }
                }
            }
        }
        MapFile {
            origin: [self.origin.x, self.origin.y, self.origin.z],
            voxel_size: self.voxel_size,
            dims: self.dims,
            boxes: Vec::new(),
            voxels,
        }
    }

    /// Marks every voxel whose interior overlaps `aabb`.
    pub fn fill_box(&mut self, aabb: &Aabb) {
        self.mark_box(aabb);
        self.rebuild_prefix();
    }

    fn mark_box(&mut self, aabb: &Aabb) {
        let Some(r) = self.overlap_range(aabb) else { return };
        for k in r[2].0..r[2].1 {
            for j in r[1].0..r[1].1 {
                for i in r[0].0..r[0].1 {
                    let idx = self.linear(i, j, k);
                    self.occupancy[idx] = true;
                }
            }
        }
    }

    pub fn set_occupied(&mut self, i: usize, j: usize, k: usize, occupied: bool) {
        let idx = self.linear(i, j, k);
        self.occupancy[idx] = occupied;
        self.rebuild_prefix();
    }

    fn rebuild_prefix(&mut self) {
        let [nx, ny, nz] = self.dims;
        let (sx, sy) = (nx + 1, ny + 1);
        let mut p = vec![0u32; sx * sy * (nz + 1)];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = self.occupancy[self.linear(i, j, k)] as u32;
                    let at = |ii: usize, jj: usize, kk: usize| (kk * sy + jj) * sx + ii;
                    let s = v + p[at(i, j + 1, k + 1)] + p[at(i + 1, j, k + 1)] + p[at(i + 1, j + 1, k)]
                        - p[at(i, j, k + 1)]
                        - p[at(i, j + 1, k)]
                        - p[at(i + 1, j, k)]
                        + p[at(i, j, k)];
                    p[at(i + 1, j + 1, k + 1)] = s;
                }
            }
        }
        self.prefix = p;
    }

    #[inline]
    fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bounds(&self) -> Aabb {
        let ext = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64) * self.voxel_size;
        Aabb::new(self.origin, self.origin + ext)
    }

    pub fn is_occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.linear(i, j, k)]
    }

    pub fn occupied_count(&self) -> usize {
        *self.prefix.last().unwrap_or(&0) as usize
    }

    pub fn voxel_box(&self, i: usize, j: usize, k: usize) -> Aabb {
        let lo = self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.voxel_size;
        Aabb::new(lo, lo + Vec3::repeat(self.voxel_size))
    }

    /// Per-axis half-open index ranges of voxels whose interiors overlap the
    /// interior of `aabb`, clipped to the grid. `None` when nothing overlaps.
    pub fn overlap_range(&self, aabb: &Aabb) -> Option<[(usize, usize); 3]> {
        let mut out = [(0, 0); 3];
        for a in 0..3 {
            let lo = (aabb.min[a] - self.origin[a]) / self.voxel_size;
            let hi = (aabb.max[a] - self.origin[a]) / self.voxel_size;
            let first = (lo + GEOM_EPS).floor().max(0.0);
            let last = (hi - GEOM_EPS).ceil().min(self.dims[a] as f64);
            if !(first < last) {
                return None;
            }
            out[a] = (first as usize, last as usize);
        }
        Some(out)
    }

    fn occupied_in_range(&self, r: &[(usize, usize); 3]) -> u32 {
        let (sx, sy) = (self.dims[0] + 1, self.dims[1] + 1);
        let at = |i: usize, j: usize, k: usize| self.prefix[(k * sy + j) * sx + i];
        let [(x0, x1), (y0, y1), (z0, z1)] = *r;
        // inclusion-exclusion on the 3D prefix table; evaluate in i64 to
        // avoid transient underflow
        let s = at(x1, y1, z1) as i64 - at(x0, y1, z1) as i64 - at(x1, y0, z1) as i64 - at(x1, y1, z0) as i64
            + at(x0, y0, z1) as i64
            + at(x0, y1, z0) as i64
            + at(x1, y0, z0) as i64
            - at(x0, y0, z0) as i64;
        s as u32
    }

    /// Whether `aabb` inflated by `inflation` on every face stays inside the
    /// map bounds and overlaps no occupied voxel. Touching a voxel face is
    /// not an overlap.
    pub fn box_in_free_space(&self, aabb: &Aabb, inflation: f64) -> bool {
        let grown = aabb.inflate(inflation);
        let bounds = self.bounds();
        if !bounds.contains_box(&grown) {
            return false;
        }
        match self.overlap_range(&grown) {
            None => true,
            Some(r) => self.occupied_in_range(&r) == 0,
        }
    }

    pub fn point_in_free_space(&self, p: &Vec3, inflation: f64) -> bool {
        self.box_in_free_space(&Aabb::from_point(*p), inflation)
    }
}
