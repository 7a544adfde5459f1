//! Axis-aligned boxes and the small amount of vector plumbing shared by
//! every stage of the planner.

use serde::{Deserialize, Serialize};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Slack used when comparing coordinates that were produced by lattice
/// arithmetic (grid points, voxel faces).
pub const GEOM_EPS: f64 = 1e-9;

/// Closed axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_point(p: Vec3) -> Self {
        Self { min: p, max: p }
    }

    pub fn centered(center: Vec3, side: f64) -> Self {
        let h = Vec3::repeat(0.5 * side);
        Self { min: center - h, max: center + h }
    }

    /// Smallest box containing both points.
    pub fn spanning(a: Vec3, b: Vec3) -> Self {
        Self { min: a.inf(&b), max: a.sup(&b) }
    }

    pub fn is_well_formed(&self) -> bool {
        (0..3).all(|a| self.min[a] <= self.max[a])
    }

    pub fn inflate(&self, amount: f64) -> Self {
        let d = Vec3::repeat(amount);
        Self { min: self.min - d, max: self.max + d }
    }

    pub fn union(&self, other: &Aabb) -> Self {
        Self { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    pub fn include_point(&self, p: Vec3) -> Self {
        Self { min: self.min.inf(&p), max: self.max.sup(&p) }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.contains_with_tol(p, GEOM_EPS)
    }

    pub fn contains_with_tol(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    /// `other` lies inside `self` (closed, with lattice slack).
    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|a| {
            other.min[a] >= self.min[a] - GEOM_EPS && other.max[a] <= self.max[a] + GEOM_EPS
        })
    }

    /// Closed intersection test.
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] + GEOM_EPS && other.min[a] <= self.max[a] + GEOM_EPS)
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }
}

/// The six axis directions, in the order used for face expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub positive: bool,
}

pub const FACE_ORDER: [Face; 6] = [
    Face { axis: 0, positive: true },
    Face { axis: 0, positive: false },
    Face { axis: 1, positive: true },
    Face { axis: 1, positive: false },
    Face { axis: 2, positive: true },
    Face { axis: 2, positive: false },
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spanning_orders_components() {
        let b = Aabb::spanning(Vec3::new(1.0, -1.0, 2.0), Vec3::new(0.0, 3.0, 2.0));
        assert_eq!(b.min, Vec3::new(0.0, -1.0, 2.0));
        assert_eq!(b.max, Vec3::new(1.0, 3.0, 2.0));
        assert!(b.is_well_formed());
    }

    #[test]
    fn touching_boxes_intersect() {
        let a = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0));
        let b = Aabb::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        assert!(a.intersects(&b));
        let c = Aabb::new(Vec3::new(1.1, 0.0, 0.0), Vec3::new(2.0, 1.0, 1.0));
        assert!(!a.intersects(&c));
    }
}
