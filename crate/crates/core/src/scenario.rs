//! Mission description: agents, planner settings, file loading and the
//! random-forest scenario generator used by the benchmarks.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::geometry::{Aabb, Vec3};
use crate::map::{BoxSpec, MapFile, VoxelMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: u32,
    pub radius: f64,
    pub start: Vec3,
    pub goal: Vec3,
}

fn d_downwash() -> f64 {
    2.0
}
fn d_ecbs_bound() -> f64 {
    1.3
}
fn d_grid_xy() -> f64 {
    0.5
}
fn d_grid_z() -> f64 {
    1.0
}
fn d_degree() -> usize {
    5
}
fn d_deriv_order() -> usize {
    3
}
fn d_t_step() -> f64 {
    1.0
}
fn d_v_max() -> f64 {
    1.7
}
fn d_a_max() -> f64 {
    6.0
}
fn d_init_box() -> f64 {
    0.5
}
fn d_sample_dt() -> f64 {
    0.01
}
fn d_true() -> bool {
    true
}
fn d_mapf_budget() -> usize {
    2_000_000
}
fn d_qp_tol() -> f64 {
    1e-6
}
fn d_qp_max_iter() -> usize {
    20_000
}
fn d_scale_margin() -> f64 {
    1.05
}
fn d_tightening() -> f64 {
    0.0
}

/// Planner settings. Every field has a default, so `{}` is a valid config.
///
/// `v_max`/`a_max` defaults are plausible values for a small indoor
/// quadrotor; they only affect the post-optimization time scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Vertical stretch of the inter-agent collision box.
    #[serde(default = "d_downwash")]
    pub downwash: f64,
    /// Suboptimality bound of the discrete planner.
    #[serde(default = "d_ecbs_bound")]
    pub ecbs_bound: f64,
    #[serde(default = "d_grid_xy")]
    pub grid_xy: f64,
    #[serde(default = "d_grid_z")]
    pub grid_z: f64,
    /// Bernstein degree of every segment.
    #[serde(default = "d_degree")]
    pub degree: usize,
    /// Derivative order penalized by the cost (3 = jerk).
    #[serde(default = "d_deriv_order")]
    pub deriv_order: usize,
    /// Duration of one discrete move before time scaling.
    #[serde(default = "d_t_step")]
    pub t_step: f64,
    #[serde(default = "d_v_max")]
    pub v_max: f64,
    #[serde(default = "d_a_max")]
    pub a_max: f64,
    /// Side of the box each corridor starts from.
    #[serde(default = "d_init_box")]
    pub init_box_size: f64,
    #[serde(default = "d_sample_dt")]
    pub sample_dt: f64,
    /// Delay relative-corridor switches that have no shared waypoint by half a step.
    #[serde(default = "d_true")]
    pub time_delay: bool,
    /// Node-expansion budget of the discrete planner (high + low level).
    #[serde(default = "d_mapf_budget")]
    pub mapf_budget: usize,
    #[serde(default = "d_qp_tol")]
    pub qp_tol: f64,
    #[serde(default = "d_qp_max_iter")]
    pub qp_max_iter: usize,
    /// Multiplier applied to the time-scaling factor when scaling is needed.
    #[serde(default = "d_scale_margin")]
    pub scale_margin: f64,
    /// Inequality constraints are tightened by this much (m). Useful with
    /// the ADMM solver, whose iterates violate bounds by up to the
    /// tolerance; the interior-point solution is feasible to round-off.
    #[serde(default = "d_tightening")]
    pub constraint_tightening: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all config fields have defaults")
    }
}

/// Highest derivative kept continuous across knots and pinned at the
/// endpoints (2 = acceleration).
pub const CONTINUITY_ORDER: usize = 2;

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        if !(self.downwash >= 1.0) {
            return bad(format!("downwash must be >= 1, got {}", self.downwash));
        }
        if !(self.ecbs_bound >= 1.0) {
            return bad(format!("ecbs_bound must be >= 1, got {}", self.ecbs_bound));
        }
        for (name, v) in [
            ("grid_xy", self.grid_xy),
            ("grid_z", self.grid_z),
            ("t_step", self.t_step),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("init_box_size", self.init_box_size),
            ("sample_dt", self.sample_dt),
            ("qp_tol", self.qp_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.degree < 3 || self.degree > 20 {
            return bad(format!("degree must be in 3..=20, got {}", self.degree));
        }
        if self.degree < 2 * CONTINUITY_ORDER - 1 {
            return bad(format!("degree {} too low for continuity order {}", self.degree, CONTINUITY_ORDER));
        }
        if self.deriv_order == 0 || self.deriv_order > self.degree {
            return bad(format!("deriv_order must be in 1..=degree, got {}", self.deriv_order));
        }
        if !(self.scale_margin >= 1.0) {
            return bad(format!("scale_margin must be >= 1, got {}", self.scale_margin));
        }
        if !(self.constraint_tightening >= 0.0) {
            return bad(format!("constraint_tightening must be >= 0, got {}", self.constraint_tightening));
        }
        Ok(())
    }
}

/// On-disk mission format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub config: PlannerConfig,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: VoxelMap,
    pub agents: Vec<AgentSpec>,
    pub config: PlannerConfig,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
}

pub fn parse_map(text: &str) -> Result<VoxelMap, ScenarioError> {
    let file: MapFile = serde_json::from_str(text).map_err(|source| ScenarioError::Parse { what: "map", source })?;
    VoxelMap::from_file(&file)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ScenarioError> {
    serde_json::from_str(text).map_err(|source| ScenarioError::Parse { what: "scenario", source })
}

pub fn load_map(path: &Path) -> Result<VoxelMap, ScenarioError> {
    parse_map(&read(path)?)
}

pub fn load_scenario(map_file: &Path, scenario_file: &Path) -> Result<Scenario, ScenarioError> {
    let map = load_map(map_file)?;
    let sc = parse_scenario(&read(scenario_file)?)?;
    validate_scenario(&map, &sc.agents, &sc.config)?;
    Ok(Scenario { map, agents: sc.agents, config: sc.config })
}

pub fn scenario_from_json(map_json: &str, scenario_json: &str) -> Result<Scenario, ScenarioError> {
    let map = parse_map(map_json)?;
    let sc = parse_scenario(scenario_json)?;
    validate_scenario(&map, &sc.agents, &sc.config)?;
    Ok(Scenario { map, agents: sc.agents, config: sc.config })
}

pub fn validate_scenario(map: &VoxelMap, agents: &[AgentSpec], config: &PlannerConfig) -> Result<(), ScenarioError> {
    config.validate()?;
    let bounds = map.bounds();
    let mut seen = HashSet::new();
    for a in agents {
        if !seen.insert(a.id) {
            return Err(ScenarioError::DuplicateId(a.id));
        }
        if !(a.radius > 0.0 && a.radius.is_finite()) {
            return Err(ScenarioError::NonPositiveRadius { id: a.id, radius: a.radius });
        }
        for (which, p) in [("start", a.start), ("goal", a.goal)] {
            if !bounds.contains(&p) {
                return Err(ScenarioError::OutOfBounds { id: a.id, which, point: [p.x, p.y, p.z] });
            }
        }
        if !map.point_in_free_space(&a.start, a.radius) {
            return Err(ScenarioError::StartInCollision { id: a.id });
        }
        if !map.point_in_free_space(&a.goal, a.radius) {
            return Err(ScenarioError::GoalInCollision { id: a.id });
        }
    }
    Ok(())
}

/// Parameters of the random-forest benchmark world.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub size_xy: f64,
    pub height: f64,
    pub voxel_size: f64,
    pub pillar_side: f64,
    pub pillar_height: (f64, f64),
    /// Half-side of the square on whose boundary the agents start.
    pub ring_half_side: f64,
    pub flight_height: f64,
    /// Minimum horizontal gap between a pillar and any start/goal point.
    pub keep_out: f64,
    pub radius: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            size_xy: 10.0,
            height: 2.5,
            voxel_size: 0.1,
            pillar_side: 0.3,
            pillar_height: (1.0, 2.5),
            ring_half_side: 4.0,
            flight_height: 1.0,
            keep_out: 0.6,
            radius: 0.15,
        }
    }
}

/// Random forest of square pillars with agents on the boundary of a square
/// and goals mirrored through the map center.
pub fn generate_forest_scenario(
    seed: u64,
    n_agents: usize,
    n_pillars: usize,
) -> Result<(VoxelMap, Vec<AgentSpec>), ScenarioError> {
    generate_forest_with(seed, n_agents, n_pillars, &ForestParams::default())
}

pub fn generate_forest_with(
    seed: u64,
    n_agents: usize,
    n_pillars: usize,
    params: &ForestParams,
) -> Result<(VoxelMap, Vec<AgentSpec>), ScenarioError> {
    let file = generate_forest_files(seed, n_agents, n_pillars, params)?;
    let map = VoxelMap::from_file(&file.0)?;
    Ok((map, file.1))
}

/// Same as [`generate_forest_with`] but returns the map in file form
/// (obstacle boxes rather than voxels).
pub fn generate_forest_files(
    seed: u64,
    n_agents: usize,
    n_pillars: usize,
    params: &ForestParams,
) -> Result<(MapFile, Vec<AgentSpec>), ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 * params.size_xy;
    let cells = (params.size_xy / params.voxel_size).round() as usize;
    let zcells = (params.height / params.voxel_size).round() as usize;

    // perimeter slots of the start square, spaced 0.5 m
    let spacing = 0.5;
    let per_side = (2.0 * params.ring_half_side / spacing).round() as usize;
    let n_slots = 4 * per_side;
    if n_agents > n_slots {
        return Err(ScenarioError::Generation(format!("{n_agents} agents do not fit on a ring with {n_slots} slots")));
    }
    let slot_point = |s: usize| -> Vec3 {
        let side = s / per_side;
        let off = (s % per_side) as f64 * spacing - params.ring_half_side;
        let h = params.ring_half_side;
        let (x, y) = match side {
            0 => (off, -h),
            1 => (h, off),
            2 => (-off, h),
            _ => (-h, -off),
        };
        Vec3::new(x, y, params.flight_height)
    };
    let phase = if n_slots > 0 { rng.gen_range(0..n_slots) } else { 0 };
    let mut agents = Vec::with_capacity(n_agents);
    let mut used = HashSet::new();
    for i in 0..n_agents {
        let slot = (phase + (i * n_slots) / n_agents.max(1)) % n_slots;
        if !used.insert(slot) {
            return Err(ScenarioError::Generation(format!("start slot {slot} assigned twice")));
        }
        let start = slot_point(slot);
        let goal = Vec3::new(-start.x, -start.y, start.z);
        agents.push(AgentSpec { id: i as u32, radius: params.radius, start, goal });
    }

    let keep: Vec<Vec3> = agents.iter().flat_map(|a| [a.start, a.goal]).collect();
    let mut boxes = Vec::with_capacity(n_pillars);
    let max_tries = 1000 * n_pillars.max(1);
    let mut tries = 0;
    let hs = 0.5 * params.pillar_side;
    while boxes.len() < n_pillars {
        tries += 1;
        if tries > max_tries {
            return Err(ScenarioError::Generation(format!(
                "placed only {} of {n_pillars} pillars after {max_tries} attempts",
                boxes.len()
            )));
        }
        let cx = rng.gen_range(-half + hs..half - hs);
        let cy = rng.gen_range(-half + hs..half - hs);
        let h = rng.gen_range(params.pillar_height.0..=params.pillar_height.1);
        let footprint = Aabb::new(Vec3::new(cx - hs, cy - hs, 0.0), Vec3::new(cx + hs, cy + hs, h));
        let clear = keep.iter().all(|p| {
            let dx = (footprint.min.x - p.x).max(p.x - footprint.max.x).max(0.0);
            let dy = (footprint.min.y - p.y).max(p.y - footprint.max.y).max(0.0);
            dx.max(dy) >= params.keep_out
        });
        if !clear {
            continue;
        }
        boxes.push(BoxSpec { min: [cx - hs, cy - hs, 0.0], max: [cx + hs, cy + hs, h] });
    }

    let file = MapFile {
        origin: [-half, -half, 0.0],
        voxel_size: params.voxel_size,
        dims: [cells, cells, zcells],
        boxes,
        voxels: Vec::new(),
    };
    Ok((file, agents))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_map_json() -> &'static str {
        r#"{"origin":[-5,-5,0],"voxel_size":0.1,"dims":[100,100,25],"boxes":[]}"#
    }

    #[test]
    fn config_defaults_match_documented_values() {
        let c = PlannerConfig::default();
        assert_eq!(c.downwash, 2.0);
        assert_eq!(c.ecbs_bound, 1.3);
        assert_eq!(c.grid_xy, 0.5);
        assert_eq!(c.grid_z, 1.0);
        assert_eq!(c.degree, 5);
        assert_eq!(c.deriv_order, 3);
        assert_eq!(c.t_step, 1.0);
        assert_eq!(c.init_box_size, 0.5);
        assert_eq!(c.sample_dt, 0.01);
        assert!(c.time_delay);
        c.validate().unwrap();
    }

    #[test]
    fn single_agent_empty_map_is_valid() {
        let sc = r#"{"agents":[{"id":0,"radius":0.15,"start":[-4,-4,1],"goal":[4,4,1]}]}"#;
        let s = scenario_from_json(empty_map_json(), sc).unwrap();
        assert_eq!(s.agents.len(), 1);
        assert_eq!(s.map.bounds().max, Vec3::new(5.0, 5.0, 2.5));
    }

    #[test]
    fn start_inside_obstacle_is_rejected() {
        let map = r#"{"origin":[-5,-5,0],"voxel_size":0.1,"dims":[100,100,25],
                      "boxes":[{"min":[-4.2,-4.2,0],"max":[-3.8,-3.8,2]}]}"#;
        let sc = r#"{"agents":[{"id":0,"radius":0.15,"start":[-4,-4,1],"goal":[4,4,1]}]}"#;
        let err = scenario_from_json(map, sc).unwrap_err();
        assert!(matches!(err, ScenarioError::StartInCollision { id: 0 }));
        assert_eq!(err.to_string(), "agent 0: start in collision");
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_radius() {
        let dup = r#"{"agents":[{"id":3,"radius":0.15,"start":[-4,-4,1],"goal":[4,4,1]},
                                {"id":3,"radius":0.15,"start":[-3,-4,1],"goal":[3,4,1]}]}"#;
        assert!(matches!(scenario_from_json(empty_map_json(), dup), Err(ScenarioError::DuplicateId(3))));
        let neg = r#"{"agents":[{"id":0,"radius":0.0,"start":[-4,-4,1],"goal":[4,4,1]}]}"#;
        assert!(matches!(
            scenario_from_json(empty_map_json(), neg),
            Err(ScenarioError::NonPositiveRadius { .. })
        ));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(
            scenario_from_json(empty_map_json(), "{agents:"),
            Err(ScenarioError::Parse { what: "scenario", .. })
        ));
    }

    #[test]
    fn forest_is_deterministic_and_antipodal() {
        let (m1, a1) = generate_forest_scenario(1, 4, 0).unwrap();
        let (m2, a2) = generate_forest_scenario(1, 4, 0).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(m1.occupied_count(), 0);
        assert_eq!(m2.occupied_count(), 0);
        for a in &a1 {
            assert_eq!(a.goal.x, -a.start.x);
            assert_eq!(a.goal.y, -a.start.y);
            assert_eq!(a.start.z, 1.0);
        }
        let (f1, _) = generate_forest_files(9, 16, 30, &ForestParams::default()).unwrap();
        let (f2, _) = generate_forest_files(9, 16, 30, &ForestParams::default()).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.boxes.len(), 30);
    }

    #[test]
    fn forest_scenario_passes_validation() {
        let (map, agents) = generate_forest_scenario(7, 16, 30).unwrap();
        validate_scenario(&map, &agents, &PlannerConfig::default()).unwrap();
        assert_eq!(agents.len(), 16);
    }
}
