//! High-level ECBS over the constraint tree.

use std::collections::BTreeSet;
use std::rc::Rc;

use super::grid::{GridGraph, NodeId};
use super::low_level::{focal_search, ConflictTable, Constraints, LowLevelFailure, LowLevelPath};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcbsSolution {
    pub paths: Vec<Vec<NodeId>>,
    /// Sum over agents of goal arrival times.
    pub cost: usize,
    /// Certified lower bound on the optimal sum of costs.
    pub lower_bound: usize,
    pub high_level_expansions: usize,
    pub low_level_expansions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcbsFailure {
    /// Agent's goal is not reachable even without other agents.
    Unreachable(usize),
    Budget,
    /// Constraint tree exhausted.
    NoSolution,
}

/// One agent's search problem.
pub struct AgentProblem<'a> {
    pub graph: &'a GridGraph,
    pub start: NodeId,
    pub goal: NodeId,
    pub heuristic: &'a [u32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conflict {
    Vertex { a: usize, b: usize, node: NodeId, t: usize },
    Edge { a: usize, b: usize, a_from: NodeId, a_to: NodeId, t: usize },
}

#[inline]
fn at(path: &[NodeId], t: usize) -> NodeId {
    path[t.min(path.len() - 1)]
}

fn pair_conflict(pa: &[NodeId], pb: &[NodeId], a: usize, b: usize) -> Option<Conflict> {
    let horizon = pa.len().max(pb.len());
    for t in 0..horizon {
        let (u, v) = (at(pa, t), at(pb, t));
        if u == v {
            return Some(Conflict::Vertex { a, b, node: u, t });
        }
        if t > 0 {
            let (u0, v0) = (at(pa, t - 1), at(pb, t - 1));
            if u0 == v && v0 == u {
                return Some(Conflict::Edge { a, b, a_from: u0, a_to: u, t });
            }
        }
    }
    None
}

fn conflict_time(c: &Conflict) -> usize {
    match *c {
        Conflict::Vertex { t, .. } | Conflict::Edge { t, .. } => t,
    }
}

/// Earliest conflict over all pairs and the number of conflicting pairs.
pub fn find_conflicts<P: std::ops::Deref<Target = Vec<NodeId>>>(paths: &[P]) -> (Option<Conflict>, usize) {
    let mut first: Option<Conflict> = None;
    let mut count = 0;
    for a in 0..paths.len() {
        for b in a + 1..paths.len() {
            if let Some(c) = pair_conflict(&paths[a], &paths[b], a, b) {
                count += 1;
                if first.as_ref().is_none_or(|f| conflict_time(&c) < conflict_time(f)) {
                    first = Some(c);
                }
            }
        }
    }
    (first, count)
}

#[derive(Clone, Copy)]
enum Added {
    Vertex(NodeId, usize),
    Edge(NodeId, NodeId, usize),
}

struct CtNode {
    constraints: Vec<Rc<Constraints>>,
    paths: Vec<Rc<Vec<NodeId>>>,
    lbs: Vec<usize>,
    cost: usize,
    lb: usize,
    conflicts: usize,
    first: Option<Conflict>,
}

fn replan(
    agents: &[AgentProblem<'_>],
    agent: usize,
    constraints: &Constraints,
    paths: &[Rc<Vec<NodeId>>],
    bound: f64,
    budget: &mut usize,
) -> Result<LowLevelPath, LowLevelFailure> {
    let table = ConflictTable::new(
        paths.iter().enumerate().filter(|&(k, _)| k != agent).map(|(_, p)| p.as_slice()),
    );
    let p = &agents[agent];
    focal_search(p.graph, p.start, p.goal, p.heuristic, constraints, bound, &table, budget)
}

/// Bounded-suboptimal ECBS. The returned cost is at most `bound` times the
/// optimal sum of costs. `budget` caps the total number of low-level
/// expansions.
pub fn ecbs(agents: &[AgentProblem<'_>], bound: f64, budget: usize) -> Result<EcbsSolution, EcbsFailure> {
    let n = agents.len();
    for (k, a) in agents.iter().enumerate() {
        if a.heuristic[a.start] == super::grid::UNREACHABLE {
            return Err(EcbsFailure::Unreachable(k));
        }
    }
    let mut remaining = budget;
    let empty = Rc::new(Constraints::default());

    let mut root_paths: Vec<Rc<Vec<NodeId>>> = Vec::with_capacity(n);
    let mut lbs = Vec::with_capacity(n);
    for k in 0..n {
        let table = ConflictTable::new(root_paths.iter().map(|p| p.as_slice()));
        let a = &agents[k];
        let r = focal_search(a.graph, a.start, a.goal, a.heuristic, &empty, bound, &table, &mut remaining)
            .map_err(|e| match e {
                LowLevelFailure::Budget => EcbsFailure::Budget,
                LowLevelFailure::NoPath => EcbsFailure::Unreachable(k),
            })?;
        root_paths.push(Rc::new(r.path));
        lbs.push(r.lower_bound);
    }
    let (first, conflicts) = find_conflicts(&root_paths);
    let root = CtNode {
        constraints: vec![empty.clone(); n],
        cost: root_paths.iter().map(|p| p.len() - 1).sum(),
        lb: lbs.iter().sum(),
        paths: root_paths,
        lbs,
        conflicts,
        first,
    };

    let mut nodes: Vec<CtNode> = vec![root];
    // open by lower bound; open by cost for refilling focal; focal by conflicts
    let mut open: BTreeSet<(usize, usize)> = BTreeSet::from([(nodes[0].lb, 0)]);
    let mut open_cost: BTreeSet<(usize, usize)> = BTreeSet::from([(nodes[0].cost, 0)]);
    let mut focal: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    let limit_of = |lb: usize| (bound * lb as f64 + 1e-9).floor() as usize;
    let mut limit = limit_of(nodes[0].lb);
    if nodes[0].cost <= limit {
        focal.insert((nodes[0].conflicts, nodes[0].cost, 0));
    }
    let mut expansions = 0;

    loop {
        let Some(&(lb_min, _)) = open.first() else {
            return Err(EcbsFailure::NoSolution);
        };
        let new_limit = limit_of(lb_min);
        if new_limit > limit {
            for &(c, id) in open_cost.range((limit + 1, 0)..) {
                if c > new_limit {
                    break;
                }
                focal.insert((nodes[id].conflicts, c, id));
            }
            limit = new_limit;
        }
        // the lowest-lb node always satisfies cost <= bound * lb, so focal is non-empty
        let (_, _, id) = focal.pop_first().expect("focal list holds the open node of minimum bound");
        open.remove(&(nodes[id].lb, id));
        open_cost.remove(&(nodes[id].cost, id));

        let Some(conflict) = nodes[id].first else {
            let node = &nodes[id];
            return Ok(EcbsSolution {
                paths: node.paths.iter().map(|p| p.as_ref().clone()).collect(),
                cost: node.cost,
                lower_bound: lb_min,
                high_level_expansions: expansions,
                low_level_expansions: budget - remaining,
            });
        };
        expansions += 1;

        let branches = match conflict {
            Conflict::Vertex { a, b, node, t } => [(a, Added::Vertex(node, t)), (b, Added::Vertex(node, t))],
            Conflict::Edge { a, b, a_from, a_to, t } => {
                [(a, Added::Edge(a_from, a_to, t)), (b, Added::Edge(a_to, a_from, t))]
            }
        };

        for (agent, add) in branches {
            let parent = &nodes[id];
            let mut cons = parent.constraints[agent].as_ref().clone();
            match add {
                Added::Vertex(v, t) => cons.vertex.insert((v, t)),
                Added::Edge(u, v, t) => cons.edge.insert((u, v, t)),
            };
            let r = match replan(agents, agent, &cons, &parent.paths, bound, &mut remaining) {
                Ok(r) => r,
                Err(LowLevelFailure::NoPath) => continue,
                Err(LowLevelFailure::Budget) => return Err(EcbsFailure::Budget),
            };
            let mut constraints = parent.constraints.clone();
            constraints[agent] = Rc::new(cons);
            let mut paths = parent.paths.clone();
            paths[agent] = Rc::new(r.path);
            let mut lbs = parent.lbs.clone();
            lbs[agent] = r.lower_bound.max(parent.lbs[agent]);
            let (first, conflicts) = find_conflicts(&paths);
            let child = CtNode {
                constraints,
                cost: paths.iter().map(|p| p.len() - 1).sum(),
                lb: lbs.iter().sum(),
                paths,
                lbs,
                conflicts,
                first,
            };
            let cid = nodes.len();
            open.insert((child.lb, cid));
            open_cost.insert((child.cost, cid));
            if child.cost <= limit {
                focal.insert((child.conflicts, child.cost, cid));
            }
            nodes.push(child);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::map::VoxelMap;

    #[test]
    fn conflict_detection_covers_swaps_and_resting_agents() {
        let (first, n) = find_conflicts(&[Rc::new(vec![0, 1, 2]), Rc::new(vec![2, 1, 0])]);
        assert_eq!(n, 1);
        assert_eq!(first, Some(Conflict::Vertex { a: 0, b: 1, node: 1, t: 1 }));
        let (first, _) = find_conflicts(&[Rc::new(vec![0, 1]), Rc::new(vec![1, 0])]);
        assert!(matches!(first, Some(Conflict::Edge { t: 1, .. })));
        // agent 1 already parked on node 5 when agent 0 passes through
        let (first, _) = find_conflicts(&[Rc::new(vec![3, 4, 5, 6]), Rc::new(vec![5])]);
        assert_eq!(first, Some(Conflict::Vertex { a: 0, b: 1, node: 5, t: 2 }));
    }

    #[test]
    fn two_agents_swap_in_open_room() {
        let map = VoxelMap::empty(Vec3::zeros(), 0.5, [6, 6, 2]).unwrap();
        let g = GridGraph::new(&map, 0.25, 0.5, 0.5);
        let s0 = g.nearest(&Vec3::new(0.5, 1.5, 0.5)).unwrap();
        let s1 = g.nearest(&Vec3::new(2.5, 1.5, 0.5)).unwrap();
        let (h0, h1) = (g.distances_to(s1), g.distances_to(s0));
        let agents = [
            AgentProblem { graph: &g, start: s0, goal: s1, heuristic: &h0 },
            AgentProblem { graph: &g, start: s1, goal: s0, heuristic: &h1 },
        ];
        let sol = ecbs(&agents, 1.0, 100_000).unwrap();
        let paths: Vec<Rc<Vec<NodeId>>> = sol.paths.iter().cloned().map(Rc::new).collect();
        assert_eq!(find_conflicts(&paths).1, 0);
        // both need 4 moves alone; one side-step detour costs 2 more
        assert_eq!(sol.cost, 4 + 4 + 2);
        assert!(sol.lower_bound <= sol.cost);
    }
}
