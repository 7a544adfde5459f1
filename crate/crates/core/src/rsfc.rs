//! Relative safe flight corridors: half-spaces that keep the relative
//! position of an agent pair outside their inter-collision box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mapf::DiscretePlan;
use crate::scenario::{AgentSpec, PlannerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "-z")]
    NegZ,
}

impl Direction {
    pub const ALL: [Direction; 6] =
        [Direction::PosX, Direction::PosY, Direction::PosZ, Direction::NegX, Direction::NegY, Direction::NegZ];

    pub fn axis(self) -> usize {
        match self {
            Direction::PosX | Direction::NegX => 0,
            Direction::PosY | Direction::NegY => 1,
            Direction::PosZ | Direction::NegZ => 2,
        }
    }

    /// +1 or -1.
    pub fn sign(self) -> f64 {
        match self {
            Direction::PosX | Direction::PosY | Direction::PosZ => 1.0,
            _ => -1.0,
        }
    }

    pub fn opposite(self) -> Direction {
        Direction::ALL[(self as usize + 3) % 6]
    }

    pub fn normal(self) -> Vec3 {
        let mut n = Vec3::zeros();
        n[self.axis()] = self.sign();
        n
    }

    /// Signed component of `p` along the direction.
    pub fn dot(self, p: &Vec3) -> f64 {
        self.sign() * p[self.axis()]
    }

    pub fn name(self) -> &'static str {
        ["+x", "+y", "+z", "-x", "-y", "-z"][self as usize]
    }
}

/// Margin separating the pair: `r_i + r_j` sideways, scaled by the downwash
/// coefficient along z.
pub fn halfspace_margin(r_i: f64, r_j: f64, direction: Direction, downwash: f64) -> f64 {
    let m = r_i + r_j;
    if direction.axis() == 2 {
        downwash * m
    } else {
        m
    }
}

/// `{p : p . n > margin}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub direction: Direction,
    pub margin: f64,
}

impl HalfSpace {
    pub fn contains(&self, p: &Vec3) -> bool {
        self.direction.dot(p) > self.margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsfcSequence {
    /// Agent indices (not ids) into the plan, `i < j` for planner output.
    pub pair: (usize, usize),
    pub halfspaces: Vec<HalfSpace>,
    /// Inclusive waypoint index range per half-space.
    pub covers: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RsfcError {
    #[error("agents {i} and {j} coincide at waypoint {k}")]
    ZeroRelative { i: usize, j: usize, k: usize },
    #[error("agents {i} and {j}: no admissible direction at waypoint {k}")]
    NoDirection { i: usize, j: usize, k: usize },
}

pub fn relative_waypoints(plan: &DiscretePlan, i: usize, j: usize) -> Vec<Vec3> {
    plan.waypoints[i].iter().zip(&plan.waypoints[j]).map(|(a, b)| b - a).collect()
}

/// Direction sequence with inclusive covers over `rel`, by the backward
/// greedy rule: at the current index take the direction whose run of
/// consecutive qualifying waypoints ending there is longest, never the
/// opposite of the direction chosen just after it.
///
/// Ties go to the lower axis (x before y before z). Two directions on the
/// same axis cannot both qualify, so this makes the result for the swapped
/// pair the exact negation.
///
/// Errors carry the waypoint index; the pair fields are left at 0.
pub fn greedy_cover(rel: &[Vec3]) -> Result<Vec<(Direction, (usize, usize))>, RsfcError> {
    let l = rel.len();
    let mut runs = vec![[0usize; 6]; l];
    for k in 0..l {
        if rel[k].iter().all(|&c| c == 0.0) {
            return Err(RsfcError::ZeroRelative { i: 0, j: 0, k });
        }
        for d in Direction::ALL {
            if d.dot(&rel[k]) > 0.0 {
                runs[k][d as usize] = if k == 0 { 1 } else { runs[k - 1][d as usize] + 1 };
            }
        }
    }
    let mut out = Vec::new();
    let mut end = l;
    let mut next: Option<Direction> = None;
    while end > 0 {
        let k = end - 1;
        let mut best: Option<(Direction, usize)> = None;
        for d in Direction::ALL {
            if next.is_some_and(|n| n == d.opposite()) {
                continue;
            }
            let s = runs[k][d as usize];
            let better = match best {
                None => s > 0,
                Some((b, bs)) => s > bs || (s == bs && d.axis() < b.axis()),
            };
            if better {
                best = Some((d, s));
            }
        }
        let (d, s) = best.ok_or(RsfcError::NoDirection { i: 0, j: 0, k })?;
        out.push((d, (end - s, k)));
        end -= s;
        next = Some(d);
    }
    out.reverse();
    Ok(out)
}

pub fn build_rsfc(
    plan: &DiscretePlan,
    i: usize,
    j: usize,
    agents: &[AgentSpec],
    config: &PlannerConfig,
) -> Result<RsfcSequence, RsfcError> {
    let rel = relative_waypoints(plan, i, j);
    let cover = greedy_cover(&rel).map_err(|e| match e {
        RsfcError::ZeroRelative { k, .. } => RsfcError::ZeroRelative { i, j, k },
        RsfcError::NoDirection { k, .. } => RsfcError::NoDirection { i, j, k },
    })?;
    let (ri, rj) = (agents[i].radius, agents[j].radius);
    Ok(RsfcSequence {
        pair: (i, j),
        halfspaces: cover
            .iter()
            .map(|&(d, _)| HalfSpace { direction: d, margin: halfspace_margin(ri, rj, d, config.downwash) })
            .collect(),
        covers: cover.iter().map(|&(_, c)| c).collect(),
    })
}

/// All pairs `i < j` in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

pub fn build_all_rsfc(
    plan: &DiscretePlan,
    agents: &[AgentSpec],
    config: &PlannerConfig,
) -> Result<Vec<RsfcSequence>, RsfcError> {
    pairs(agents.len()).into_par_iter().map(|(i, j)| build_rsfc(plan, i, j, agents, config)).collect()
}

/// Whether two agents at `a` and `b` overlap: the relative position lies
/// strictly inside the box of half-extents `(m, m, downwash * m)`,
/// `m = r_i + r_j`.
pub fn inter_collision(a: &Vec3, b: &Vec3, r_i: f64, r_j: f64, downwash: f64) -> bool {
    let d = b - a;
    let m = r_i + r_j;
    d.x.abs() < m && d.y.abs() < m && d.z.abs() < downwash * m
}
