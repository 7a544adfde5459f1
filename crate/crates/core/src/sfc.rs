//! Safe flight corridors: obstacle-free boxes along each agent's waypoints.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3, FACE_ORDER, GEOM_EPS};
use crate::map::VoxelMap;
use crate::mapf::DiscretePlan;
use crate::scenario::{AgentSpec, PlannerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub bbox: Aabb,
    /// Inclusive range of waypoint indices assigned to this corridor.
    pub covers: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorSequence {
    pub agent: u32,
    pub corridors: Vec<Corridor>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SfcError {
    #[error("agent {agent}: waypoint {index} is in collision")]
    WaypointInCollision { agent: u32, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SfcViolation {
    /// Corridor `m` inflated by the radius hits an obstacle or leaves the map.
    Obstacle { m: usize },
    /// Corridors `m` and `m + 1` do not intersect.
    Disconnected { m: usize },
    /// Waypoint `k` is assigned to corridor `m` but lies outside it.
    Outside { m: usize, k: usize },
    /// Covers ranges are not consecutive starting at 0 and ending at the last waypoint.
    Coverage { m: usize },
}

/// Moves one face of `b` outward so that the inflated face lands on the next
/// voxel boundary. Returns `None` when the face is already at the map edge.
fn step_face(map: &VoxelMap, b: &Aabb, axis: usize, positive: bool, r: f64) -> Option<Aabb> {
    let (o, s) = (map.origin()[axis], map.voxel_size());
    let bounds = map.bounds();
    let mut out = *b;
    if positive {
        let u = (b.max[axis] + r - o) / s;
        let next = o + ((u + GEOM_EPS).floor() + 1.0) * s;
        if next > bounds.max[axis] + GEOM_EPS {
            return None;
        }
        out.max[axis] = next - r;
    } else {
        let u = (b.min[axis] - r - o) / s;
        let next = o + ((u - GEOM_EPS).ceil() - 1.0) * s;
        if next < bounds.min[axis] - GEOM_EPS {
            return None;
        }
        out.min[axis] = next + r;
    }
    Some(out)
}

/// Grows `b` face by face, round robin in the fixed face order, until no
/// face can move without hitting an obstacle or the map edge.
pub fn expand_box(map: &VoxelMap, b: Aabb, r: f64) -> Aabb {
    let mut b = b;
    let mut active = [true; 6];
    while active.iter().any(|&a| a) {
        for (f, face) in FACE_ORDER.iter().enumerate() {
            if !active[f] {
                continue;
            }
            match step_face(map, &b, face.axis, face.positive, r) {
                Some(grown) if map.box_in_free_space(&grown, r) => b = grown,
                _ => active[f] = false,
            }
        }
    }
    b
}

fn seed_box(map: &VoxelMap, w: &Vec3, prev: Option<&Vec3>, r: f64, init_size: f64) -> Option<Aabb> {
    let init = Aabb::centered(*w, init_size);
    let mut b = if map.box_in_free_space(&init, r) {
        init
    } else if map.point_in_free_space(w, r) {
        Aabb::from_point(*w)
    } else {
        return None;
    };
    if let Some(p) = prev {
        if !b.contains(p) {
            let joined = b.include_point(*p);
            b = if map.box_in_free_space(&joined, r) { joined } else { Aabb::spanning(*w, *p) };
        }
    }
    Some(b)
}

/// Corridor sequence for one agent's waypoints.
///
/// Every waypoint gets a box of side `init_box_size` (or the bare point if
/// that box is not free), stretched to include the previous waypoint, then
/// grown to a maximal free box. Corridors contained in a neighbour are
/// dropped and their waypoints handed to that neighbour.
pub fn build_sfc_for(
    map: &VoxelMap,
    waypoints: &[Vec3],
    agent: u32,
    radius: f64,
    init_box_size: f64,
) -> Result<CorridorSequence, SfcError> {
    let key = |p: &Vec3| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
    let mut cache: HashMap<([u64; 3], [u64; 3]), Aabb> = HashMap::new();
    let mut corridors = Vec::with_capacity(waypoints.len());
    for (k, w) in waypoints.iter().enumerate() {
        let prev = k.checked_sub(1).map(|p| &waypoints[p]);
        let ck = (key(w), prev.map_or([u64::MAX; 3], key));
        let bbox = match cache.get(&ck) {
            Some(b) => *b,
            None => {
                let seed = seed_box(map, w, prev, radius, init_box_size)
                    .ok_or(SfcError::WaypointInCollision { agent, index: k })?;
                let b = expand_box(map, seed, radius);
                cache.insert(ck, b);
                b
            }
        };
        corridors.push(Corridor { bbox, covers: (k, k) });
    }
    dedup(&mut corridors);
    Ok(CorridorSequence { agent, corridors })
}

fn dedup(corridors: &mut Vec<Corridor>) {
    let mut changed = true;
    while changed {
        changed = false;
        let mut m = 0;
        while m < corridors.len() && corridors.len() > 1 {
            let cur = corridors[m].bbox;
            if m + 1 < corridors.len() && corridors[m + 1].bbox.contains_box(&cur) {
                corridors[m + 1].covers.0 = corridors[m].covers.0;
                corridors.remove(m);
                changed = true;
            } else if m > 0 && corridors[m - 1].bbox.contains_box(&cur) {
                corridors[m - 1].covers.1 = corridors[m].covers.1;
                corridors.remove(m);
                changed = true;
            } else {
                m += 1;
            }
        }
    }
}

pub fn build_sfc(
    map: &VoxelMap,
    plan: &DiscretePlan,
    agent: usize,
    radius: f64,
    config: &PlannerConfig,
) -> Result<CorridorSequence, SfcError> {
    build_sfc_for(map, &plan.waypoints[agent], plan.agent_ids[agent], radius, config.init_box_size)
}

/// Corridors for every agent, built in parallel.
pub fn build_all_sfc(
    map: &VoxelMap,
    plan: &DiscretePlan,
    agents: &[AgentSpec],
    config: &PlannerConfig,
) -> Result<Vec<CorridorSequence>, SfcError> {
    (0..agents.len()).into_par_iter().map(|i| build_sfc(map, plan, i, agents[i].radius, config)).collect()
}

/// Re-checks the corridor conditions from scratch: each box inflated by the
/// radius is free, consecutive boxes intersect, and covers ranges tile the
/// waypoints with every waypoint inside its box.
pub fn check_sfc(seq: &CorridorSequence, map: &VoxelMap, waypoints: &[Vec3], radius: f64) -> Vec<SfcViolation> {
    let mut out = Vec::new();
    let cs = &seq.corridors;
    let mut next_k = 0;
    for (m, c) in cs.iter().enumerate() {
        if !map.box_in_free_space(&c.bbox, radius) {
            out.push(SfcViolation::Obstacle { m });
        }
        if m + 1 < cs.len() {
            let (a, b) = (&c.bbox, &cs[m + 1].bbox);
            let overlap = (0..3).all(|ax| a.min[ax].max(b.min[ax]) <= a.max[ax].min(b.max[ax]) + 1e-9);
            if !overlap {
                out.push(SfcViolation::Disconnected { m });
            }
        }
        let (lo, hi) = c.covers;
        if lo != next_k || hi < lo || hi >= waypoints.len() {
            out.push(SfcViolation::Coverage { m });
        }
        for k in lo..=hi.min(waypoints.len().saturating_sub(1)) {
            let w = &waypoints[k];
            let inside = (0..3).all(|ax| w[ax] >= c.bbox.min[ax] - 1e-9 && w[ax] <= c.bbox.max[ax] + 1e-9);
            if !inside {
                out.push(SfcViolation::Outside { m, k });
            }
        }
        next_k = hi + 1;
    }
    if next_k != waypoints.len() {
        out.push(SfcViolation::Coverage { m: cs.len() });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> VoxelMap {
        VoxelMap::empty(Vec3::new(-5.0, -5.0, 0.0), 0.1, [100, 100, 25]).unwrap()
    }

    fn approx(a: &Vec3, b: &Vec3) -> bool {
        (a - b).amax() < 1e-9
    }

    #[test]
    fn single_waypoint_fills_the_room() {
        let map = room();
        let seq = build_sfc_for(&map, &[Vec3::new(0.3, -1.2, 1.0)], 0, 0.15, 0.5).unwrap();
        assert_eq!(seq.corridors.len(), 1);
        let b = seq.corridors[0].bbox;
        assert!(approx(&b.min, &Vec3::new(-4.85, -4.85, 0.15)));
        assert!(approx(&b.max, &Vec3::new(4.85, 4.85, 2.35)));
    }

    #[test]
    fn open_room_collapses_to_one_corridor() {
        let map = room();
        let w: Vec<Vec3> = (0..6).map(|k| Vec3::new(-2.0 + 0.5 * k as f64, 0.0, 1.0)).collect();
        let seq = build_sfc_for(&map, &w, 0, 0.15, 0.5).unwrap();
        assert_eq!(seq.corridors.len(), 1);
        assert_eq!(seq.corridors[0].covers, (0, 5));
        assert!(check_sfc(&seq, &map, &w, 0.15).is_empty());
    }

    #[test]
    fn wall_gap_gives_overlapping_corridors() {
        let mut map = room();
        // wall at x in [0, 0.3] with a 0.5 m wide, full-height slot around y = 0
        map.fill_box(&Aabb::new(Vec3::new(0.0, -5.0, 0.0), Vec3::new(0.3, -0.25, 2.5)));
        map.fill_box(&Aabb::new(Vec3::new(0.0, 0.25, 0.0), Vec3::new(0.3, 5.0, 2.5)));
        let w = vec![Vec3::new(-1.0, 0.0, 1.0), Vec3::new(-0.5, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.5, 0.0, 1.0), Vec3::new(1.0, 0.0, 1.0)];
        let seq = build_sfc_for(&map, &w, 0, 0.1, 0.2).unwrap();
        assert!(seq.corridors.len() >= 2);
        assert!(check_sfc(&seq, &map, &w, 0.1).is_empty());
    }

    #[test]
    fn expansion_is_maximal() {
        let mut map = room();
        map.fill_box(&Aabb::new(Vec3::new(1.0, 1.0, 0.0), Vec3::new(1.3, 1.3, 2.0)));
        let b = expand_box(&map, Aabb::centered(Vec3::new(0.5, 0.5, 1.0), 0.2), 0.15);
        assert!(map.box_in_free_space(&b, 0.15));
        for f in FACE_ORDER {
            if let Some(g) = step_face(&map, &b, f.axis, f.positive, 0.15) {
                assert!(!map.box_in_free_space(&g, 0.15));
            }
        }
    }

    #[test]
    fn validator_flags_shifted_and_missing_corridors() {
        let mut map = room();
        map.fill_box(&Aabb::new(Vec3::new(2.0, -5.0, 0.0), Vec3::new(2.3, 5.0, 2.5)));
        let w = vec![Vec3::new(0.0, 0.0, 1.0)];
        let mut seq = build_sfc_for(&map, &w, 0, 0.15, 0.5).unwrap();
        seq.corridors[0].bbox.max.x += 0.5;
        assert!(check_sfc(&seq, &map, &w, 0.15).contains(&SfcViolation::Obstacle { m: 0 }));

        let seq = CorridorSequence {
            agent: 0,
            corridors: vec![
                Corridor { bbox: Aabb::centered(Vec3::new(0.0, 0.0, 1.0), 0.5), covers: (0, 0) },
                Corridor { bbox: Aabb::centered(Vec3::new(-3.0, 0.0, 1.0), 0.5), covers: (1, 1) },
            ],
        };
        let w = vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(-3.0, 0.0, 1.0)];
        assert_eq!(check_sfc(&seq, &map, &w, 0.15), vec![SfcViolation::Disconnected { m: 0 }]);
    }
}
