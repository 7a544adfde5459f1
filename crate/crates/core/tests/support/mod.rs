//! Independent reference implementations used by the integration tests.
//! Nothing here calls the code it is used to check.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use rsfc::bernstein::PiecewiseBernstein;
use rsfc::geometry::Vec3;
use rsfc::mapf::grid::{GridGraph, NodeId};
use rsfc::rsfc::Direction;
use rsfc::{AgentSpec, VoxelMap};

// ---------------------------------------------------------------- MAPF

/// Small lattice world: 6 x 5 interior nodes at z = 1 with a random subset
/// blocked, plus random distinct starts and goals.
pub struct TinyInstance {
    pub map: VoxelMap,
    pub graph: GridGraph,
    pub starts: Vec<NodeId>,
    pub goals: Vec<NodeId>,
}

pub const TINY_RADIUS: f64 = 0.1;

pub fn tiny_instance(rng: &mut impl Rng, n_agents: usize) -> Option<TinyInstance> {
    // lattice 0.5 m, voxels 0.25 m; lattice points sit on voxel corners
    let mut map = VoxelMap::empty(Vec3::zeros(), 0.25, [14, 12, 8]).unwrap();
    let blocked = rng.gen_range(0..=8);
    for _ in 0..blocked {
        let (i, j) = (rng.gen_range(1..=6usize), rng.gen_range(1..=5usize));
        let c = Vec3::new(i as f64 * 0.5, j as f64 * 0.5, 1.0);
        map.fill_box(&rsfc::Aabb::new(c - Vec3::repeat(0.25), c + Vec3::repeat(0.25)));
    }
    let graph = GridGraph::new(&map, TINY_RADIUS, 0.5, 1.0);
    let free: Vec<NodeId> = (0..graph.node_count()).filter(|&v| graph.is_free(v)).collect();
    assert!(free.len() <= 30, "{} free nodes", free.len());
    if free.len() < 2 * n_agents {
        return None;
    }
    let mut pick = free.clone();
    let starts: Vec<NodeId> = (0..n_agents).map(|_| pick.swap_remove(rng.gen_range(0..pick.len()))).collect();
    let mut pick = free;
    let goals: Vec<NodeId> = (0..n_agents).map(|_| pick.swap_remove(rng.gen_range(0..pick.len()))).collect();
    Some(TinyInstance { map, graph, starts, goals })
}

fn bfs(graph: &GridGraph, goal: NodeId) -> Vec<u32> {
    let mut d = vec![u32::MAX; graph.node_count()];
    d[goal] = 0;
    let mut q = std::collections::VecDeque::from([goal]);
    while let Some(u) = q.pop_front() {
        for v in graph.neighbors(u) {
            if d[v] == u32::MAX {
                d[v] = d[u] + 1;
                q.push_back(v);
            }
        }
    }
    d
}

/// Optimal sum of arrival times by A* over joint states. An agent that
/// waits on its goal accrues a pending charge that is paid if it later
/// leaves, so the cost is exactly the sum over agents of the last time each
/// one arrives at its goal. Vertex and swap conflicts are forbidden.
pub fn joint_astar(graph: &GridGraph, starts: &[NodeId], goals: &[NodeId], max_cost: u32) -> Option<u32> {
    let n = starts.len();
    let dist: Vec<Vec<u32>> = goals.iter().map(|&g| bfs(graph, g)).collect();
    if (0..n).any(|k| dist[k][starts[k]] == u32::MAX) {
        return None;
    }
    type State = (Vec<NodeId>, Vec<u32>);
    let h = |pos: &[NodeId]| -> u32 { (0..n).map(|k| dist[k][pos[k]]).sum() };
    let mut best: HashMap<State, u32> = HashMap::new();
    let mut open = BinaryHeap::new();
    let s0: State = (starts.to_vec(), vec![0; n]);
    best.insert(s0.clone(), 0);
    open.push(Reverse((h(starts), 0u32, s0)));
    while let Some(Reverse((f, g, state))) = open.pop() {
        if f > max_cost {
            return None;
        }
        if best.get(&state).is_some_and(|&b| b < g) {
            continue;
        }
        let (pos, pending) = &state;
        if (0..n).all(|k| pos[k] == goals[k]) {
            return Some(g);
        }
        // per-agent options: wait or move to a neighbor
        let options: Vec<Vec<NodeId>> =
            pos.iter().map(|&p| std::iter::once(p).chain(graph.neighbors(p)).collect()).collect();
        let mut idx = vec![0usize; n];
        'outer: loop {
            let next: Vec<NodeId> = (0..n).map(|k| options[k][idx[k]]).collect();
            let ok = (0..n).all(|a| {
                (a + 1..n).all(|b| next[a] != next[b] && !(next[a] == pos[b] && next[b] == pos[a]))
            });
            if ok {
                let mut cost = g;
                let mut pend = pending.clone();
                for k in 0..n {
                    if pos[k] == goals[k] && next[k] == goals[k] {
                        pend[k] += 1;
                    } else {
                        cost += 1 + pend[k];
                        pend[k] = 0;
                    }
                }
                let s: State = (next, pend);
                if best.get(&s).is_none_or(|&b| cost < b) {
                    best.insert(s.clone(), cost);
                    open.push(Reverse((cost + h(&s.0), cost, s)));
                }
            }
            for k in 0..n {
                idx[k] += 1;
                if idx[k] < options[k].len() {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
    }
    None
}

/// Checks lattice paths for legality and conflicts; returns the sum of
/// arrival times.
pub fn check_paths(graph: &GridGraph, starts: &[NodeId], goals: &[NodeId], paths: &[Vec<NodeId>]) -> usize {
    let at = |p: &Vec<NodeId>, t: usize| p[t.min(p.len() - 1)];
    let horizon = paths.iter().map(Vec::len).max().unwrap();
    for (k, p) in paths.iter().enumerate() {
        assert_eq!(p[0], starts[k]);
        assert_eq!(*p.last().unwrap(), goals[k]);
        for w in p.windows(2) {
            assert!(w[0] == w[1] || graph.neighbors(w[0]).any(|v| v == w[1]), "illegal move");
        }
    }
    for t in 0..horizon {
        for a in 0..paths.len() {
            for b in a + 1..paths.len() {
                assert_ne!(at(&paths[a], t), at(&paths[b], t), "vertex conflict at t={t}");
                if t > 0 {
                    let swap = at(&paths[a], t) == at(&paths[b], t - 1) && at(&paths[b], t) == at(&paths[a], t - 1);
                    assert!(!swap, "swap conflict at t={t}");
                }
            }
        }
    }
    paths
        .iter()
        .zip(goals)
        .map(|(p, &g)| p.iter().rposition(|&v| v != g).map_or(0, |i| i + 1))
        .sum()
}

// ---------------------------------------------------------------- RSFC

/// Fewest half-space switches covering `rel`, by enumerating every
/// assignment of a qualifying direction to each waypoint. Adjacent
/// waypoints may not carry opposite directions. `None` if no assignment
/// exists.
pub fn brute_min_transitions(rel: &[Vec3]) -> Option<usize> {
    let choices: Vec<Vec<Direction>> =
        rel.iter().map(|p| Direction::ALL.into_iter().filter(|d| d.dot(p) > 0.0).collect()).collect();
    if choices.iter().any(Vec::is_empty) {
        return None;
    }
    let mut best: Option<usize> = None;
    let mut idx = vec![0usize; rel.len()];
    loop {
        let labels: Vec<Direction> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        if labels.windows(2).all(|w| w[1] != w[0].opposite()) {
            let t = labels.windows(2).filter(|w| w[0] != w[1]).count();
            best = Some(best.map_or(t, |b| b.min(t)));
        }
        let mut k = 0;
        loop {
            if k == rel.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

// ---------------------------------------------------------------- Bernstein

pub fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// Power-basis coefficients (in the local parameter) of a Bernstein
/// polynomial, by expanding `(1 - s)^(n - k)` binomially.
pub fn bernstein_to_power(c: &[f64]) -> Vec<f64> {
    let n = c.len() - 1;
    let mut out = vec![0.0; n + 1];
    for (k, ck) in c.iter().enumerate() {
        for j in 0..=n - k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            out[k + j] += ck * choose(n, k) * choose(n - k, j) * sign;
        }
    }
    out
}

pub fn poly_derivative(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
}

pub fn horner(p: &[f64], s: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1) + rec(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// Integral of the squared `order`-th time derivative of a scalar
/// Bernstein piece of duration `dt`, by quadrature on the power form.
pub fn derivative_energy(controls: &[f64], order: usize, dt: f64, tol: f64) -> f64 {
    let mut p = bernstein_to_power(controls);
    for _ in 0..order {
        p = poly_derivative(&p);
    }
    if p.is_empty() {
        return 0.0;
    }
    let scale = dt.powi(-(order as i32));
    let f = |t: f64| {
        let v = horner(&p, t / dt) * scale;
        v * v
    };
    adaptive_simpson(&f, 0.0, dt, tol)
}

/// Minimum-jerk rest-to-rest profile: `x0 + (x1 - x0)(10s^3 - 15s^4 + 6s^5)`
/// and its first two time derivatives.
pub fn quintic(x0: f64, x1: f64, duration: f64, t: f64) -> [f64; 3] {
    let s = t / duration;
    let d = x1 - x0;
    [
        x0 + d * (10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5)),
        d * (30.0 * s * s - 60.0 * s.powi(3) + 30.0 * s.powi(4)) / duration,
        d * (60.0 * s - 180.0 * s * s + 120.0 * s.powi(3)) / (duration * duration),
    ]
}

// ---------------------------------------------------------------- QP

/// `(stationarity, primal violation, complementarity)` residuals of a
/// candidate primal-dual pair, from the triplet form of `P` and `A`.
/// Multipliers follow the convention `y < 0` on lower and `y > 0` on upper
/// bounds.
pub fn kkt_residuals(
    p: &[(usize, usize, f64)],
    q: &[f64],
    a: &[(usize, usize, f64)],
    l: &[f64],
    u: &[f64],
    x: &[f64],
    y: &[f64],
) -> (f64, f64, f64) {
    let mut grad = q.to_vec();
    for &(i, j, v) in p {
        grad[i] += v * x[j];
    }
    let mut ax = vec![0.0; l.len()];
    for &(i, j, v) in a {
        ax[i] += v * x[j];
        grad[j] += v * y[i];
    }
    let stat = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut prim = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..l.len() {
        prim = prim.max(l[i] - ax[i]).max(ax[i] - u[i]);
        // a negative multiplier must sit on the lower bound, a positive one on the upper
        let gap = if y[i] < 0.0 { ax[i] - l[i] } else { u[i] - ax[i] };
        if gap.is_finite() {
            comp = comp.max((y[i] * gap).abs());
        }
    }
    (stat, prim.max(0.0), comp)
}

// ---------------------------------------------------------------- trajectories

#[derive(Debug, Default, Clone, Copy)]
pub struct SafetyStats {
    pub samples: usize,
    pub obstacle_violations: usize,
    pub pair_violations: usize,
    pub min_clearance_slack: f64,
}

/// Distance from `p` to the nearest occupied voxel, scanning the voxels
/// within `reach`.
pub fn clearance(map: &VoxelMap, p: &Vec3, reach: f64) -> f64 {
    let o = map.origin();
    let s = map.voxel_size();
    let dims = map.dims();
    let lo: Vec<i64> = (0..3).map(|a| ((p[a] - reach - o[a]) / s).floor() as i64).collect();
    let hi: Vec<i64> = (0..3).map(|a| ((p[a] + reach - o[a]) / s).ceil() as i64).collect();
    let mut best = f64::INFINITY;
    for k in lo[2].max(0)..hi[2].min(dims[2] as i64) {
        for j in lo[1].max(0)..hi[1].min(dims[1] as i64) {
            for i in lo[0].max(0)..hi[0].min(dims[0] as i64) {
                if !map.is_occupied(i as usize, j as usize, k as usize) {
                    continue;
                }
                let idx = [i, j, k];
                let mut d2 = 0.0;
                for a in 0..3 {
                    let vmin = o[a] + idx[a] as f64 * s;
                    let d = (vmin - p[a]).max(p[a] - (vmin + s)).max(0.0);
                    d2 += d * d;
                }
                best = best.min(d2.sqrt());
            }
        }
    }
    best
}

/// Samples every trajectory with de Casteljau at `dt` (plus the final time)
/// and counts obstacle and pairwise violations. `tol` absorbs round-off on
/// the comparisons.
pub fn safety_check(
    trajs: &[PiecewiseBernstein],
    agents: &[AgentSpec],
    map: &VoxelMap,
    downwash: f64,
    dt: f64,
    tol: f64,
) -> SafetyStats {
    let end = trajs.iter().map(|t| t.end_time()).fold(0.0, f64::max);
    let steps = (end / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    if *times.last().unwrap() < end {
        times.push(end);
    }
    let mut st = SafetyStats { samples: times.len(), min_clearance_slack: f64::INFINITY, ..Default::default() };
    for &t in &times {
        let pos: Vec<Vec3> = trajs.iter().map(|tr| tr.eval(t)).collect();
        for (k, p) in pos.iter().enumerate() {
            let r = agents[k].radius;
            let c = clearance(map, p, r + 0.2);
            st.min_clearance_slack = st.min_clearance_slack.min(c - r);
            if c < r - tol {
                st.obstacle_violations += 1;
            }
        }
        for a in 0..pos.len() {
            for b in a + 1..pos.len() {
                let m = agents[a].radius + agents[b].radius;
                let d = pos[b] - pos[a];
                if d.x.abs() < m - tol && d.y.abs() < m - tol && d.z.abs() < downwash * m - tol {
                    st.pair_violations += 1;
                }
            }
        }
    }
    st
}

/// Largest jump in position, velocity and acceleration across interior
/// knots, and the largest endpoint error (position to start/goal, velocity
/// and acceleration to zero). Derivatives come from the power form.
pub fn smoothness(trajs: &[PiecewiseBernstein], agents: &[AgentSpec]) -> (f64, f64) {
    let derivs = |piece: &rsfc::bernstein::BernsteinPiece, at_end: bool| -> [Vec3; 3] {
        let h = piece.t1 - piece.t0;
        let s = if at_end { 1.0 } else { 0.0 };
        let mut out = [Vec3::zeros(); 3];
        for a in 0..3 {
            let mut p = bernstein_to_power(&piece.controls.iter().map(|c| c[a]).collect::<Vec<_>>());
            for (d, o) in out.iter_mut().enumerate() {
                o[a] = horner(&p, s) / h.powi(d as i32);
                p = poly_derivative(&p);
            }
        }
        out
    };
    let mut jump = 0.0f64;
    let mut endpoint = 0.0f64;
    for (tr, ag) in trajs.iter().zip(agents) {
        for w in tr.pieces.windows(2) {
            let (l, r) = (derivs(&w[0], true), derivs(&w[1], false));
            for d in 0..3 {
                jump = jump.max((l[d] - r[d]).amax());
            }
        }
        let s = derivs(&tr.pieces[0], false);
        let e = derivs(tr.pieces.last().unwrap(), true);
        endpoint = endpoint.max((s[0] - ag.start).amax()).max((e[0] - ag.goal).amax());
        for d in 1..3 {
            endpoint = endpoint.max(s[d].amax()).max(e[d].amax());
        }
    }
    (jump, endpoint)
}

// ---------------------------------------------------------------- pipeline

/// Runs the stages up to QP assembly on a scenario, as the planner does.
pub fn build_qp(s: &rsfc::Scenario) -> (rsfc::mapf::DiscretePlan, rsfc::time_alloc::TimeSegments, rsfc::formulation::QpProblem) {
    use rsfc::rsfc::{build_all_rsfc, relative_waypoints};
    use rsfc::sfc::build_all_sfc;
    use rsfc::time_alloc::{allocate, rsfc_partial, sfc_partial};
    let (map, agents, config) = (&s.map, &s.agents, &s.config);
    let plan = rsfc::mapf::plan_discrete(map, agents, config).expect("mapf");
    let sfc = build_all_sfc(map, &plan, agents, config).expect("sfc");
    let rsfc = build_all_rsfc(&plan, agents, config).expect("rsfc");
    let sp: Vec<Vec<u32>> =
        sfc.iter().zip(&plan.waypoints).map(|(c, w)| sfc_partial(c, w, config.time_delay).unwrap()).collect();
    let rp: Vec<Vec<u32>> = rsfc
        .iter()
        .map(|r| rsfc_partial(r, &relative_waypoints(&plan, r.pair.0, r.pair.1), config.time_delay).unwrap())
        .collect();
    let seg = allocate(&sp, &rp, plan.l_max, config.t_step);
    let qp = rsfc::formulation::assemble(agents, &sfc, &rsfc, &seg, config).expect("assemble");
    (plan, seg, qp)
}

pub fn forest(seed: u64, n: usize, radius: f64) -> rsfc::Scenario {
    let params = rsfc::scenario::ForestParams { radius, ..Default::default() };
    let (map, agents) = rsfc::scenario::generate_forest_with(seed, n, 30, &params).unwrap();
    rsfc::Scenario { map, agents, config: rsfc::PlannerConfig::default() }
}

/// `(M, l_max)` for a scenario: segment count after time allocation and the
/// discrete horizon. `None` if an earlier stage fails.
pub fn segment_bound(s: &rsfc::Scenario) -> Option<(usize, usize)> {
    use rsfc::rsfc::{build_all_rsfc, relative_waypoints};
    use rsfc::sfc::build_all_sfc;
    use rsfc::time_alloc::{allocate, rsfc_partial, sfc_partial};
    let (map, agents, config) = (&s.map, &s.agents, &s.config);
    let plan = rsfc::mapf::plan_discrete(map, agents, config).ok()?;
    let sfc = build_all_sfc(map, &plan, agents, config).ok()?;
    let rsfc = build_all_rsfc(&plan, agents, config).ok()?;
    let sp: Vec<Vec<u32>> =
        sfc.iter().zip(&plan.waypoints).map(|(c, w)| sfc_partial(c, w, config.time_delay)).collect::<Result<_, _>>().ok()?;
    let rp: Vec<Vec<u32>> = rsfc
        .iter()
        .map(|r| rsfc_partial(r, &relative_waypoints(&plan, r.pair.0, r.pair.1), config.time_delay))
        .collect::<Result<_, _>>()
        .ok()?;
    Some((allocate(&sp, &rp, plan.l_max, config.t_step).segment_count(), plan.l_max))
}

/// Scalar rest-to-rest QP on `segments` equal pieces with continuity up to
/// acceleration; only equality rows.
pub fn rest_to_rest(degree: usize, segments: usize, duration: f64, x0: f64, x1: f64) -> rsfc::qp::QpData {
    use rsfc::bernstein::jerk_cost_block;
    use rsfc::qp::{Csc, QpData};
    let n1 = degree + 1;
    let h = duration / segments as f64;
    let nv = n1 * segments;
    let block = jerk_cost_block(degree, h);
    let mut p = Vec::new();
    for s in 0..segments {
        for i in 0..n1 {
            for j in 0..n1 {
                p.push((s * n1 + i, s * n1 + j, block[i][j]));
            }
        }
    }
    let deriv = |d: usize, at_end: bool| -> Vec<(usize, f64)> {
        let f: f64 = (0..d).map(|i| (degree - i) as f64).product::<f64>() / h.powi(d as i32);
        (0..=d)
            .map(|i| {
                let c = choose(d, i) * if (d - i) % 2 == 0 { 1.0 } else { -1.0 };
                (if at_end { degree - d + i } else { i }, f * c)
            })
            .collect()
    };
    let (mut a, mut rhs) = (Vec::new(), Vec::new());
    for d in 0..3 {
        let r = rhs.len();
        a.extend(deriv(d, false).into_iter().map(|(k, v)| (r, k, v)));
        rhs.push(if d == 0 { x0 } else { 0.0 });
        let r = rhs.len();
        a.extend(deriv(d, true).into_iter().map(|(k, v)| (r, (segments - 1) * n1 + k, v)));
        rhs.push(if d == 0 { x1 } else { 0.0 });
        for s in 0..segments - 1 {
            let r = rhs.len();
            a.extend(deriv(d, true).into_iter().map(|(k, v)| (r, s * n1 + k, v)));
            a.extend(deriv(d, false).into_iter().map(|(k, v)| (r, (s + 1) * n1 + k, -v)));
            rhs.push(0.0);
        }
    }
    QpData { p: Csc::from_triplets(nv, nv, &p), q: vec![0.0; nv], a: Csc::from_triplets(rhs.len(), nv, &a), l: rhs.clone(), u: rhs }
}
