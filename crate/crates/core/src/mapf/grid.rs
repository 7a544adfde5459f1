use std::collections::VecDeque;

use crate::geometry::{Aabb, Vec3, GEOM_EPS};
use crate::map::VoxelMap;

/// Index of a lattice point. Shared by every agent's graph, so node ids can
/// be compared across agents of different sizes.
pub type NodeId = usize;

pub const UNREACHABLE: u32 = u32::MAX;

/// 6-connected lattice over the map with nodes spaced `grid_xy` in x/y and
/// `grid_z` in z, filtered for one clearance radius.
///
/// A node is usable when the point inflated by the radius is free; a move is
/// usable when the box swept between its endpoints, inflated by the radius,
/// is free.
#[derive(Debug, Clone)]
pub struct GridGraph {
    origin: Vec3,
    step: Vec3,
    dims: [usize; 3],
    radius: f64,
    free: Vec<bool>,
    // bit d set when the move in direction FACE d is usable
    moves: Vec<u8>,
}

const DIRS: [(usize, i64); 6] = [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)];

impl GridGraph {
    pub fn new(map: &VoxelMap, radius: f64, grid_xy: f64, grid_z: f64) -> Self {
        let b = map.bounds();
        let step = Vec3::new(grid_xy, grid_xy, grid_z);
        let ext = b.extent();
        let dims = [0, 1, 2].map(|a| ((ext[a] / step[a]) + GEOM_EPS).floor() as usize + 1);
        let n = dims[0] * dims[1] * dims[2];
        let mut g = Self { origin: b.min, step, dims, radius, free: vec![false; n], moves: vec![0; n] };
        for id in 0..n {
            let p = g.position(id);
            g.free[id] = map.point_in_free_space(&p, radius);
        }
        for id in 0..n {
            if !g.free[id] {
                continue;
            }
            let c = g.coords(id);
            for (d, &(axis, sign)) in DIRS.iter().enumerate() {
                let Some(nb) = g.offset(c, axis, sign) else { continue };
                if !g.free[nb] {
                    continue;
                }
                let sweep = Aabb::spanning(g.position(id), g.position(nb));
                if map.box_in_free_space(&sweep, radius) {
                    g.moves[id] |= 1 << d;
                }
            }
        }
        g
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn step(&self) -> Vec3 {
        self.step
    }

    pub fn node_count(&self) -> usize {
        self.free.len()
    }

    pub fn coords(&self, id: NodeId) -> [usize; 3] {
        let i = id % self.dims[0];
        let j = (id / self.dims[0]) % self.dims[1];
        let k = id / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn node_at(&self, c: [usize; 3]) -> Option<NodeId> {
        if (0..3).any(|a| c[a] >= self.dims[a]) {
            return None;
        }
        Some((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0])
    }

    fn offset(&self, c: [usize; 3], axis: usize, sign: i64) -> Option<NodeId> {
        let v = c[axis] as i64 + sign;
        if v < 0 || v as usize >= self.dims[axis] {
            return None;
        }
        let mut c2 = c;
        c2[axis] = v as usize;
        self.node_at(c2)
    }

    pub fn position(&self, id: NodeId) -> Vec3 {
        let c = self.coords(id);
        self.origin + Vec3::new(c[0] as f64 * self.step.x, c[1] as f64 * self.step.y, c[2] as f64 * self.step.z)
    }

    /// Nearest lattice point (rounding per axis), regardless of whether it is free.
    pub fn nearest(&self, p: &Vec3) -> Option<NodeId> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let r = ((p[a] - self.origin[a]) / self.step[a]).round();
            if r < 0.0 || r as usize >= self.dims[a] {
                return None;
            }
            c[a] = r as usize;
        }
        self.node_at(c)
    }

    /// Whether `p` coincides with its nearest lattice point.
    pub fn is_on_lattice(&self, p: &Vec3) -> bool {
        self.nearest(p).is_some_and(|n| (self.position(n) - p).amax() <= GEOM_EPS)
    }

    pub fn is_free(&self, id: NodeId) -> bool {
        self.free[id]
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let c = self.coords(id);
        let mask = self.moves[id];
        DIRS.iter()
            .enumerate()
            .filter(move |(d, _)| mask & (1 << d) != 0)
            .filter_map(move |(_, &(axis, sign))| self.offset(c, axis, sign))
    }

    pub fn is_move(&self, from: NodeId, to: NodeId) -> bool {
        from == to || self.neighbors(from).any(|n| n == to)
    }

    /// Breadth-first move counts to `goal` over usable nodes and moves.
    pub fn distances_to(&self, goal: NodeId) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.node_count()];
        if !self.free[goal] {
            return dist;
        }
        dist[goal] = 0;
        let mut queue = VecDeque::from([goal]);
        while let Some(u) = queue.pop_front() {
            // moves are symmetric, so forward neighbors double as predecessors
            for v in self.neighbors(u) {
                if dist[v] == UNREACHABLE {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_spans_bounds_and_blocks_border() {
        let map = VoxelMap::empty(Vec3::new(-5.0, -5.0, 0.0), 0.1, [100, 100, 25]).unwrap();
        let g = GridGraph::new(&map, 0.15, 0.5, 1.0);
        assert_eq!(g.dims(), [21, 21, 3]);
        let border = g.nearest(&Vec3::new(-5.0, 0.0, 1.0)).unwrap();
        assert!(!g.is_free(border));
        let floor = g.nearest(&Vec3::new(0.0, 0.0, 0.0)).unwrap();
        assert!(!g.is_free(floor));
        let inner = g.nearest(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(g.is_free(inner));
        assert_eq!(g.neighbors(inner).count(), 5);
        assert!(g.is_on_lattice(&Vec3::new(-4.0, 4.0, 2.0)));
        assert!(!g.is_on_lattice(&Vec3::new(-4.1, 4.0, 2.0)));
    }

    #[test]
    fn thin_wall_between_nodes_blocks_the_move() {
        let mut map = VoxelMap::empty(Vec3::zeros(), 0.05, [40, 40, 40]).unwrap();
        // slab at x in [0.7, 0.8]: both neighbouring nodes clear it, the move does not
        map.fill_box(&Aabb::new(Vec3::new(0.7, 0.0, 0.0), Vec3::new(0.8, 2.0, 2.0)));
        let g = GridGraph::new(&map, 0.15, 0.5, 0.5);
        let a = g.nearest(&Vec3::new(0.5, 1.0, 1.0)).unwrap();
        let b = g.nearest(&Vec3::new(1.0, 1.0, 1.0)).unwrap();
        assert!(g.is_free(a) && g.is_free(b));
        assert!(!g.is_move(a, b));
        let c = g.nearest(&Vec3::new(0.5, 1.5, 1.0)).unwrap();
        assert!(g.is_move(a, c));
        let dist = g.distances_to(b);
        assert_eq!(dist[a], UNREACHABLE);
        assert_eq!(dist[b], 0);
    }
}
