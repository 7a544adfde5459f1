//! Discrete initial trajectories: bounded-suboptimal MAPF on a 3D lattice.

pub mod ecbs;
pub mod grid;
pub mod low_level;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::map::VoxelMap;
use crate::scenario::{AgentSpec, PlannerConfig};

pub use ecbs::{ecbs, find_conflicts, AgentProblem, Conflict, EcbsFailure, EcbsSolution};
pub use grid::{GridGraph, NodeId, UNREACHABLE};
pub use low_level::{focal_search, ConflictTable, Constraints, LowLevelFailure, LowLevelPath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapfError {
    #[error("agent {id}: no lattice node near the {which}, or it is blocked")]
    Blocked { id: u32, which: &'static str },
    #[error("agent {id}: {which} cannot be connected to its nearest lattice node")]
    NotConnectable { id: u32, which: &'static str },
    #[error("agents {a} and {b} share the {which} lattice node")]
    SharedNode { a: u32, b: u32, which: &'static str },
    #[error("agent {id}: goal unreachable")]
    Unreachable { id: u32 },
    #[error("search budget of {budget} expansions exhausted")]
    Timeout { budget: usize },
    #[error("no conflict-free plan exists")]
    NoSolution,
}

impl MapfError {
    /// Short machine-readable failure kind.
    pub fn reason(&self) -> &'static str {
        match self {
            MapfError::Blocked { .. } => "blocked",
            MapfError::NotConnectable { .. } => "not_connectable",
            MapfError::SharedNode { .. } => "shared_node",
            MapfError::Unreachable { .. } => "unreachable",
            MapfError::Timeout { .. } => "timeout",
            MapfError::NoSolution => "no_solution",
        }
    }
}

/// Waypoint arrays for all agents, padded to a common length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePlan {
    pub agent_ids: Vec<u32>,
    /// `waypoints[i][k]`: position of agent i at step k.
    pub waypoints: Vec<Vec<Vec3>>,
    /// Lattice node behind each waypoint (the snapped node for off-lattice
    /// start/goal points).
    pub nodes: Vec<Vec<NodeId>>,
    pub l_max: usize,
    /// Sum of lattice path lengths before padding.
    pub cost: usize,
    pub lower_bound: usize,
    pub expansions: usize,
}

impl DiscretePlan {
    pub fn agent_count(&self) -> usize {
        self.waypoints.len()
    }
}

/// Lattice graphs shared between agents of equal radius.
pub struct GraphSet {
    graphs: Vec<GridGraph>,
    by_agent: Vec<usize>,
}

impl GraphSet {
    pub fn new(map: &VoxelMap, agents: &[AgentSpec], config: &PlannerConfig) -> Self {
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut graphs = Vec::new();
        let mut by_agent = Vec::with_capacity(agents.len());
        for a in agents {
            let k = *index.entry(a.radius.to_bits()).or_insert_with(|| {
                graphs.push(GridGraph::new(map, a.radius, config.grid_xy, config.grid_z));
                graphs.len() - 1
            });
            by_agent.push(k);
        }
        Self { graphs, by_agent }
    }

    pub fn graph(&self, agent: usize) -> &GridGraph {
        &self.graphs[self.by_agent[agent]]
    }
}

fn snap(
    map: &VoxelMap,
    graph: &GridGraph,
    agent: &AgentSpec,
    p: &Vec3,
    which: &'static str,
) -> Result<NodeId, MapfError> {
    let node = graph.nearest(p).filter(|&n| graph.is_free(n)).ok_or(MapfError::Blocked { id: agent.id, which })?;
    if !map.box_in_free_space(&Aabb::spanning(*p, graph.position(node)), agent.radius) {
        return Err(MapfError::NotConnectable { id: agent.id, which });
    }
    Ok(node)
}

/// Plans conflict-free lattice paths with ECBS and turns them into padded
/// waypoint arrays.
///
/// Start and goal points that are off the lattice are connected to their
/// nearest lattice node by an extra first (last) waypoint. The extra step is
/// inserted for every agent so that waypoint indices stay synchronized; agents
/// already on the lattice repeat their point.
pub fn plan_discrete(map: &VoxelMap, agents: &[AgentSpec], config: &PlannerConfig) -> Result<DiscretePlan, MapfError> {
    let graphs = GraphSet::new(map, agents, config);
    plan_discrete_with(map, agents, config, &graphs)
}

pub fn plan_discrete_with(
    map: &VoxelMap,
    agents: &[AgentSpec],
    config: &PlannerConfig,
    graphs: &GraphSet,
) -> Result<DiscretePlan, MapfError> {
    let n = agents.len();
    let mut starts = Vec::with_capacity(n);
    let mut goals = Vec::with_capacity(n);
    for (k, a) in agents.iter().enumerate() {
        let g = graphs.graph(k);
        starts.push(snap(map, g, a, &a.start, "start")?);
        goals.push(snap(map, g, a, &a.goal, "goal")?);
    }
    for (which, nodes) in [("start", &starts), ("goal", &goals)] {
        let mut seen: HashMap<NodeId, usize> = HashMap::new();
        for (k, &v) in nodes.iter().enumerate() {
            if let Some(&other) = seen.get(&v) {
                return Err(MapfError::SharedNode { a: agents[other].id, b: agents[k].id, which });
            }
            seen.insert(v, k);
        }
    }

    let heuristics: Vec<Vec<u32>> = (0..n).map(|k| graphs.graph(k).distances_to(goals[k])).collect();
    let problems: Vec<AgentProblem<'_>> = (0..n)
        .map(|k| AgentProblem { graph: graphs.graph(k), start: starts[k], goal: goals[k], heuristic: &heuristics[k] })
        .collect();
    let sol = ecbs(&problems, config.ecbs_bound, config.mapf_budget).map_err(|e| match e {
        EcbsFailure::Unreachable(k) => MapfError::Unreachable { id: agents[k].id },
        EcbsFailure::Budget => MapfError::Timeout { budget: config.mapf_budget },
        EcbsFailure::NoSolution => MapfError::NoSolution,
    })?;

    let lattice_len = sol.paths.iter().map(Vec::len).max().unwrap_or(1);
    let prepend = agents.iter().enumerate().any(|(k, a)| !graphs.graph(k).is_on_lattice(&a.start));
    let append = agents.iter().enumerate().any(|(k, a)| !graphs.graph(k).is_on_lattice(&a.goal));

    let mut waypoints = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for (k, a) in agents.iter().enumerate() {
        let g = graphs.graph(k);
        let path = &sol.paths[k];
        let mut w = Vec::with_capacity(lattice_len + 2);
        let mut ids = Vec::with_capacity(lattice_len + 2);
        if prepend {
            w.push(a.start);
            ids.push(path[0]);
        }
        for t in 0..lattice_len {
            let v = path[t.min(path.len() - 1)];
            w.push(g.position(v));
            ids.push(v);
        }
        if append {
            w.push(a.goal);
            ids.push(*path.last().unwrap());
        }
        // exact endpoints for agents already on the lattice
        w[0] = a.start;
        *w.last_mut().unwrap() = a.goal;
        waypoints.push(w);
        nodes.push(ids);
    }
    let l_max = waypoints.first().map_or(0, Vec::len);
    Ok(DiscretePlan {
        agent_ids: agents.iter().map(|a| a.id).collect(),
        waypoints,
        nodes,
        l_max,
        cost: sol.cost,
        lower_bound: sol.lower_bound,
        expansions: sol.low_level_expansions,
    })
}
