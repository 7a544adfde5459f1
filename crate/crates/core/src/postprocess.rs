//! Uniform time scaling and the independent safety verifier.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::{basis, PiecewiseBernstein};
use crate::geometry::Vec3;
use crate::map::VoxelMap;
use crate::scenario::AgentSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBundle {
    pub trajectories: Vec<PiecewiseBernstein>,
    /// Knots after scaling.
    pub knots: Vec<f64>,
    pub scale: f64,
}

impl TrajectoryBundle {
    pub fn new(trajectories: Vec<PiecewiseBernstein>, knots: Vec<f64>) -> Self {
        Self { trajectories, knots, scale: 1.0 }
    }

    pub fn duration(&self) -> f64 {
        *self.knots.last().unwrap_or(&0.0)
    }

    /// Sample times `0, dt, 2 dt, ...` up to the duration.
    pub fn sample_times(&self, dt: f64) -> Vec<f64> {
        sample_times(self.duration(), dt)
    }
}

pub fn sample_times(duration: f64, dt: f64) -> Vec<f64> {
    let n = (duration / dt + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

/// Largest sampled speed and acceleration norm over all agents, at
/// `sample_times(duration, dt)` plus the final instant.
pub fn sampled_maxima(bundle: &TrajectoryBundle, dt: f64) -> (f64, f64) {
    let mut times = bundle.sample_times(dt);
    times.push(bundle.duration());
    bundle
        .trajectories
        .par_iter()
        .map(|traj| {
            times.iter().fold((0.0f64, 0.0f64), |(v, a), &t| {
                let [_, vel, acc] = traj.eval_derivs(t);
                (v.max(vel.norm()), a.max(acc.norm()))
            })
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)))
}

/// Scale factor `max(1, V / v_max, sqrt(A / a_max))`, times `margin` when
/// any slowing down is needed.
pub fn scale_factor(v: f64, a: f64, v_max: f64, a_max: f64, margin: f64) -> f64 {
    let s = (v / v_max).max((a / a_max).sqrt());
    if s > 1.0 {
        s * margin
    } else {
        1.0
    }
}

/// Slows every trajectory down by the same factor so the sampled speed and
/// acceleration respect the limits. The geometric path is unchanged.
pub fn time_scale(bundle: &TrajectoryBundle, v_max: f64, a_max: f64, dt: f64, margin: f64) -> TrajectoryBundle {
    let (v, a) = sampled_maxima(bundle, dt);
    let s = scale_factor(v, a, v_max, a_max, margin);
    apply_scale(bundle, s)
}

pub fn apply_scale(bundle: &TrajectoryBundle, s: f64) -> TrajectoryBundle {
    TrajectoryBundle {
        trajectories: bundle.trajectories.iter().map(|t| t.scaled(s)).collect(),
        knots: bundle.knots.iter().map(|k| k * s).collect(),
        scale: bundle.scale * s,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Obstacle { agent: u32, t: f64, clearance: f64 },
    OutOfBounds { agent: u32, t: f64 },
    Collision { a: u32, b: u32, t: f64 },
    Continuity { agent: u32, knot: usize, order: usize, jump: f64 },
    Endpoint { agent: u32, which: String, order: usize, error: f64 },
}

impl Violation {
    fn time(&self) -> f64 {
        match self {
            Violation::Obstacle { t, .. } | Violation::OutOfBounds { t, .. } | Violation::Collision { t, .. } => *t,
            Violation::Continuity { .. } | Violation::Endpoint { .. } => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub samples_per_agent: usize,
    /// Smallest distance from an agent center to an occupied voxel, minus the radius.
    pub min_obstacle_slack: f64,
    pub max_continuity_jump: f64,
    pub max_endpoint_error: f64,
    pub violations: Vec<Violation>,
}

pub const CONTINUITY_TOL: f64 = 1e-6;
/// Round-off allowance (m) on the clearance and separation comparisons. A
/// corridor squeezed into a gap exactly `2 r` wide puts the trajectory at
/// clearance `r` to within a few ulps.
pub const GEOMETRY_TOL: f64 = 1e-9;
pub const ENDPOINT_TOL: f64 = 1e-6;

/// Position, velocity and acceleration on one piece, summed directly over
/// the Bernstein basis and its derivatives.
fn eval_direct(traj: &PiecewiseBernstein, t: f64) -> [Vec3; 3] {
    let idx = traj.pieces.partition_point(|p| p.t1 < t).min(traj.pieces.len() - 1);
    eval_piece(traj, idx, t)
}

fn eval_piece(traj: &PiecewiseBernstein, idx: usize, t: f64) -> [Vec3; 3] {
    let piece = &traj.pieces[idx];
    let n = piece.controls.len() - 1;
    let h = piece.t1 - piece.t0;
    let tau = ((t - piece.t0) / h).clamp(0.0, 1.0);
    let b = |k: isize, deg: usize| if k < 0 || k as usize > deg { 0.0 } else { basis(k as usize, deg, tau) };
    let mut out = [Vec3::zeros(); 3];
    for (k, c) in piece.controls.iter().enumerate() {
        let k = k as isize;
        out[0] += c * b(k, n);
        if n >= 1 {
            out[1] += c * (n as f64 * (b(k - 1, n - 1) - b(k, n - 1)) / h);
        }
        if n >= 2 {
            let w = (n * (n - 1)) as f64 * (b(k - 2, n - 2) - 2.0 * b(k - 1, n - 2) + b(k, n - 2));
            out[2] += c * (w / (h * h));
        }
    }
    out
}

/// Euclidean distance from `p` to the nearest occupied voxel within
/// `reach`, or `f64::INFINITY` if none is that close.
fn obstacle_distance(map: &VoxelMap, p: &Vec3, reach: f64) -> f64 {
    let o = map.origin();
    let s = map.voxel_size();
    let dims = map.dims();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let l = ((p[a] - reach - o[a]) / s).floor().max(0.0);
        let h = ((p[a] + reach - o[a]) / s).floor().min(dims[a] as f64 - 1.0);
        if h < l {
            return f64::INFINITY;
        }
        lo[a] = l as usize;
        hi[a] = h as usize;
    }
    let mut best = f64::INFINITY;
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                if !map.is_occupied(i, j, k) {
                    continue;
                }
                let vb = map.voxel_box(i, j, k);
                let mut d2 = 0.0;
                for a in 0..3 {
                    let d = (vb.min[a] - p[a]).max(0.0).max(p[a] - vb.max[a]);
                    d2 += d * d;
                }
                best = best.min(d2.sqrt());
            }
        }
    }
    best
}

/// Independent check of a trajectory bundle: clearance to obstacles,
/// pairwise separation against the inter-collision box, continuity at the
/// knots and rest-to-rest endpoints. Uses only the polynomials, the map and
/// the agent specs.
pub fn verify(
    bundle: &TrajectoryBundle,
    map: &VoxelMap,
    agents: &[AgentSpec],
    downwash: f64,
    sample_dt: f64,
) -> VerifyReport {
    let mut times = bundle.sample_times(sample_dt);
    if times.last().is_none_or(|&t| t < bundle.duration()) {
        times.push(bundle.duration());
    }
    let bounds = map.bounds();
    let trajs = &bundle.trajectories;

    // positions per agent per sample
    let positions: Vec<Vec<Vec3>> =
        trajs.par_iter().map(|tr| times.iter().map(|&t| eval_direct(tr, t)[0]).collect()).collect();

    let per_agent: Vec<(Vec<Violation>, f64, f64, f64)> = (0..trajs.len())
        .into_par_iter()
        .map(|i| {
            let ag = &agents[i];
            let tr = &trajs[i];
            let mut v = Vec::new();
            let mut slack = f64::INFINITY;
            for (s, p) in positions[i].iter().enumerate() {
                let d = obstacle_distance(map, p, ag.radius + map.voxel_size());
                slack = slack.min(d - ag.radius);
                if d < ag.radius - GEOMETRY_TOL {
                    v.push(Violation::Obstacle { agent: ag.id, t: times[s], clearance: d });
                }
                if !bounds.contains(p) {
                    v.push(Violation::OutOfBounds { agent: ag.id, t: times[s] });
                }
            }
            let mut jump_max = 0.0f64;
            for m in 0..tr.pieces.len().saturating_sub(1) {
                let t = tr.pieces[m].t1;
                let left = eval_piece(tr, m, t);
                let right = eval_piece(tr, m + 1, t);
                for order in 0..3 {
                    let jump = (left[order] - right[order]).amax();
                    jump_max = jump_max.max(jump);
                    if jump > CONTINUITY_TOL {
                        v.push(Violation::Continuity { agent: ag.id, knot: m + 1, order, jump });
                    }
                }
            }
            let mut end_max = 0.0f64;
            let ends = [("start", tr.start_time(), ag.start), ("goal", tr.end_time(), ag.goal)];
            for (which, t, target) in ends {
                let d = eval_direct(tr, t);
                let errs = [(d[0] - target).amax(), d[1].amax(), d[2].amax()];
                for (order, &error) in errs.iter().enumerate() {
                    end_max = end_max.max(error);
                    if error > ENDPOINT_TOL {
                        v.push(Violation::Endpoint { agent: ag.id, which: which.to_string(), order, error });
                    }
                }
            }
            (v, slack, jump_max, end_max)
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..trajs.len()).flat_map(|i| (i + 1..trajs.len()).map(move |j| (i, j))).collect();
    let pair_violations: Vec<Vec<Violation>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let m = agents[i].radius + agents[j].radius;
            let mut v = Vec::new();
            for s in 0..times.len() {
                let d = positions[j][s] - positions[i][s];
                let tol = GEOMETRY_TOL;
                if d.x.abs() < m - tol && d.y.abs() < m - tol && d.z.abs() < downwash * m - tol {
                    v.push(Violation::Collision { a: agents[i].id, b: agents[j].id, t: times[s] });
                }
            }
            v
        })
        .collect();

    let mut violations: Vec<Violation> = Vec::new();
    let mut slack = f64::INFINITY;
    let mut jump = 0.0f64;
    let mut end = 0.0f64;
    for (v, s, jm, em) in per_agent {
        violations.extend(v);
        slack = slack.min(s);
        jump = jump.max(jm);
        end = end.max(em);
    }
    for v in pair_violations {
        violations.extend(v);
    }
    // stable: ties keep agent order, then pair order
    violations.sort_by(|a, b| a.time().total_cmp(&b.time()));
    VerifyReport {
        passed: violations.is_empty(),
        samples_per_agent: times.len(),
        min_obstacle_slack: slack,
        max_continuity_jump: jump,
        max_endpoint_error: end,
        violations,
    }
}
