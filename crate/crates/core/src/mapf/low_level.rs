//! Single-agent focal search in the time-expanded lattice.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};

use super::grid::{GridGraph, NodeId, UNREACHABLE};

/// Space-time constraints on one agent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Constraints {
    /// Agent may not be at `node` at time `t`.
    pub vertex: HashSet<(NodeId, usize)>,
    /// Agent may not move `from -> to` arriving at time `t`.
    pub edge: HashSet<(NodeId, NodeId, usize)>,
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        self.vertex.is_empty() && self.edge.is_empty()
    }

    fn max_time(&self) -> usize {
        let v = self.vertex.iter().map(|&(_, t)| t).max().unwrap_or(0);
        let e = self.edge.iter().map(|&(_, _, t)| t).max().unwrap_or(0);
        v.max(e)
    }

    /// Earliest time the agent may arrive at `goal` for good.
    fn earliest_rest(&self, goal: NodeId) -> usize {
        self.vertex.iter().filter(|&&(n, _)| n == goal).map(|&(_, t)| t + 1).max().unwrap_or(0)
    }
}

/// Where the other agents are, for the focal tie-break. Agents rest at the
/// last node of their path forever.
#[derive(Debug, Default)]
pub struct ConflictTable {
    by_time: Vec<HashMap<NodeId, u32>>,
    resting: HashMap<NodeId, Vec<usize>>,
    moves: HashMap<(NodeId, NodeId, usize), u32>,
    horizon: usize,
}

impl ConflictTable {
    pub fn new<'a>(paths: impl IntoIterator<Item = &'a [NodeId]>) -> Self {
        let mut table = Self::default();
        for p in paths {
            table.add(p);
        }
        table
    }

    fn add(&mut self, path: &[NodeId]) {
        let Some(&last) = path.last() else { return };
        let rest_from = path.len() - 1;
        if self.by_time.len() < rest_from {
            self.by_time.resize_with(rest_from, HashMap::new);
        }
        for (t, &n) in path[..rest_from].iter().enumerate() {
            *self.by_time[t].entry(n).or_default() += 1;
        }
        for t in 1..path.len() {
            if path[t - 1] != path[t] {
                *self.moves.entry((path[t - 1], path[t], t)).or_default() += 1;
            }
        }
        self.resting.entry(last).or_default().push(rest_from);
        self.horizon = self.horizon.max(path.len());
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Conflicts incurred by being at `node` at time `t` after moving from `prev`.
    pub fn count(&self, prev: NodeId, node: NodeId, t: usize) -> u32 {
        let mut c = self.by_time.get(t).and_then(|m| m.get(&node)).copied().unwrap_or(0);
        if let Some(r) = self.resting.get(&node) {
            c += r.iter().filter(|&&from| from <= t).count() as u32;
        }
        if prev != node {
            c += self.moves.get(&(node, prev, t)).copied().unwrap_or(0);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowLevelPath {
    /// Node at each time step; the last entry is the goal.
    pub path: Vec<NodeId>,
    /// Arrival time at the goal.
    pub cost: usize,
    /// Lower bound on the constrained optimal cost, certified by the open list.
    pub lower_bound: usize,
    pub conflicts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowLevelFailure {
    NoPath,
    Budget,
}

struct SearchNode {
    node: NodeId,
    t: usize,
    g: usize,
    f: usize,
    conflicts: u32,
    parent: Option<usize>,
    open: bool,
}

/// Focal search: expands, among open states with `f <= bound * f_min`, the
/// one with the fewest conflicts against `table`. The returned path costs at
/// most `bound` times the constrained optimum.
///
/// `heuristic` must be the exact unconstrained move count to `goal`
/// (see [`GridGraph::distances_to`]). `budget` is decremented per expansion.
#[allow(clippy::too_many_arguments)]
pub fn focal_search(
    graph: &GridGraph,
    start: NodeId,
    goal: NodeId,
    heuristic: &[u32],
    constraints: &Constraints,
    bound: f64,
    table: &ConflictTable,
    budget: &mut usize,
) -> Result<LowLevelPath, LowLevelFailure> {
    if heuristic[start] == UNREACHABLE || constraints.vertex.contains(&(start, 0)) {
        return Err(LowLevelFailure::NoPath);
    }
    let earliest_rest = constraints.earliest_rest(goal);
    // beyond this time nothing depends on t any more
    let t_static = constraints.max_time().max(table.horizon()) + 1;

    let mut arena: Vec<SearchNode> = Vec::new();
    let mut open: BTreeSet<(usize, Reverse<usize>, usize)> = BTreeSet::new();
    let mut focal: BTreeSet<(u32, usize, Reverse<usize>, usize)> = BTreeSet::new();
    let mut best: HashMap<(NodeId, usize), usize> = HashMap::new();

    let focal_limit = |f_min: usize| (bound * f_min as f64 + 1e-9).floor() as usize;

    let h0 = heuristic[start] as usize;
    arena.push(SearchNode { node: start, t: 0, g: 0, f: h0, conflicts: 0, parent: None, open: true });
    open.insert((h0, Reverse(0), 0));
    focal.insert((0, h0, Reverse(0), 0));
    best.insert((start, 0), 0);
    let mut limit = focal_limit(h0);

    loop {
        let Some(&(f_min, _, _)) = open.first() else {
            return Err(LowLevelFailure::NoPath);
        };
        let new_limit = focal_limit(f_min);
        if new_limit > limit {
            for &(f, Reverse(g), id) in open.range((limit + 1, Reverse(usize::MAX), 0)..) {
                if f > new_limit {
                    break;
                }
                focal.insert((arena[id].conflicts, f, Reverse(g), id));
            }
            limit = new_limit;
        }
        let Some((_, _, _, id)) = focal.pop_first() else {
            return Err(LowLevelFailure::NoPath);
        };
        let (node, t, g, f) = {
            let n = &arena[id];
            (n.node, n.t, n.g, n.f)
        };
        open.remove(&(f, Reverse(g), id));
        arena[id].open = false;

        if node == goal && t >= earliest_rest {
            let mut path = Vec::with_capacity(t + 1);
            let mut cur = Some(id);
            while let Some(c) = cur {
                path.push(arena[c].node);
                cur = arena[c].parent;
            }
            path.reverse();
            return Ok(LowLevelPath { path, cost: g, lower_bound: f_min, conflicts: arena[id].conflicts });
        }

        if *budget == 0 {
            return Err(LowLevelFailure::Budget);
        }
        *budget -= 1;

        let t2 = t + 1;
        let waits = t < t_static;
        let succ = graph.neighbors(node).chain(waits.then_some(node));
        for next in succ {
            if constraints.vertex.contains(&(next, t2)) || constraints.edge.contains(&(node, next, t2)) {
                continue;
            }
            let h = heuristic[next];
            if h == UNREACHABLE {
                continue;
            }
            let g2 = g + 1;
            let f2 = g2 + h as usize;
            let c2 = arena[id].conflicts + table.count(node, next, t2);
            let key = (next, t2.min(t_static));
            if let Some(&old) = best.get(&key) {
                let o = &arena[old];
                if o.g < g2 || (o.g == g2 && o.conflicts <= c2) {
                    continue;
                }
                if o.open {
                    let (of, og, oc) = (o.f, o.g, o.conflicts);
                    open.remove(&(of, Reverse(og), old));
                    focal.remove(&(oc, of, Reverse(og), old));
                    arena[old].open = false;
                }
            }
            let nid = arena.len();
            arena.push(SearchNode { node: next, t: t2, g: g2, f: f2, conflicts: c2, parent: Some(id), open: true });
            best.insert(key, nid);
            open.insert((f2, Reverse(g2), nid));
            if f2 <= limit {
                focal.insert((c2, f2, Reverse(g2), nid));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::map::VoxelMap;

    fn corridor_graph() -> GridGraph {
        // 1 x 6 free cells at z = 0.5: a dead-straight corridor
        let map = VoxelMap::empty(Vec3::zeros(), 0.5, [7, 2, 2]).unwrap();
        GridGraph::new(&map, 0.25, 0.5, 0.5)
    }

    fn node(g: &GridGraph, x: f64, y: f64, z: f64) -> NodeId {
        g.nearest(&Vec3::new(x, y, z)).unwrap()
    }

    #[test]
    fn unconstrained_path_is_shortest() {
        let map = VoxelMap::empty(Vec3::zeros(), 0.5, [6, 6, 2]).unwrap();
        let g = GridGraph::new(&map, 0.25, 0.5, 0.5);
        let s = node(&g, 0.5, 0.5, 0.5);
        let goal = node(&g, 2.5, 2.0, 0.5);
        let h = g.distances_to(goal);
        let mut budget = 10_000;
        let r = focal_search(&g, s, goal, &h, &Constraints::default(), 1.0, &ConflictTable::default(), &mut budget)
            .unwrap();
        assert_eq!(r.cost, 7);
        assert_eq!(r.path.len(), 8);
        assert_eq!(r.lower_bound, 7);
        for w in r.path.windows(2) {
            assert!(g.is_move(w[0], w[1]));
        }
    }

    #[test]
    fn vertex_constraint_in_corridor_forces_one_wait() {
        let g = corridor_graph();
        let s = node(&g, 0.5, 0.5, 0.5);
        let goal = node(&g, 3.0, 0.5, 0.5);
        assert_eq!(g.neighbors(s).count(), 1);
        let h = g.distances_to(goal);
        let blocked = node(&g, 1.5, 0.5, 0.5);
        let mut c = Constraints::default();
        c.vertex.insert((blocked, 2));
        let mut budget = 10_000;
        let r = focal_search(&g, s, goal, &h, &c, 1.0, &ConflictTable::default(), &mut budget).unwrap();
        assert_eq!(r.cost, 5 + 1);
        assert_ne!(r.path[2], blocked);
    }

    #[test]
    fn goal_constraint_delays_arrival() {
        let g = corridor_graph();
        let s = node(&g, 0.5, 0.5, 0.5);
        let goal = node(&g, 1.5, 0.5, 0.5);
        let h = g.distances_to(goal);
        let mut c = Constraints::default();
        c.vertex.insert((goal, 4));
        let mut budget = 10_000;
        let r = focal_search(&g, s, goal, &h, &c, 1.0, &ConflictTable::default(), &mut budget).unwrap();
        assert_eq!(r.cost, 5);
        assert_eq!(*r.path.last().unwrap(), goal);
        assert_ne!(r.path[4], goal);
    }

    #[test]
    fn focal_prefers_conflict_free_detour() {
        let map = VoxelMap::empty(Vec3::zeros(), 0.5, [6, 6, 2]).unwrap();
        let g = GridGraph::new(&map, 0.25, 0.5, 0.5);
        let s = node(&g, 0.5, 0.5, 0.5);
        let goal = node(&g, 2.5, 0.5, 0.5);
        let h = g.distances_to(goal);
        // another agent parked on the straight line
        let parked = vec![node(&g, 1.5, 0.5, 0.5)];
        let table = ConflictTable::new([parked.as_slice()]);
        let mut budget = 10_000;
        let r = focal_search(&g, s, goal, &h, &Constraints::default(), 1.5, &table, &mut budget).unwrap();
        assert_eq!(r.conflicts, 0);
        assert!(r.cost <= 6);
        assert!(r.cost as f64 <= 1.5 * r.lower_bound as f64);
    }

    #[test]
    fn exhausted_budget_is_reported() {
        let map = VoxelMap::empty(Vec3::zeros(), 0.5, [6, 6, 2]).unwrap();
        let g = GridGraph::new(&map, 0.25, 0.5, 0.5);
        let s = node(&g, 0.5, 0.5, 0.5);
        let goal = node(&g, 2.5, 2.5, 0.5);
        let h = g.distances_to(goal);
        let mut budget = 2;
        let r = focal_search(&g, s, goal, &h, &Constraints::default(), 1.0, &ConflictTable::default(), &mut budget);
        assert_eq!(r, Err(LowLevelFailure::Budget));
    }
}
