//! The full planner: discrete paths, corridors, relative corridors, time
//! allocation, the QP, time scaling and verification.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::formulation::{assemble, extract_trajectories, AssembleError, Layout};
use crate::mapf::{plan_discrete, DiscretePlan, MapfError};
use crate::postprocess::{time_scale, verify, TrajectoryBundle, VerifyReport};
use crate::qp::{solve, QpInfo, QpSettings, QpStatus};
use crate::rsfc::{build_all_rsfc, relative_waypoints, RsfcError, RsfcSequence};
use crate::scenario::Scenario;
use crate::sfc::{build_all_sfc, CorridorSequence, SfcError};
use crate::time_alloc::{allocate, rsfc_partial, sfc_partial, TimeAllocError, TimeSegments};
use crate::ScenarioError;

/// Process exit codes of the command line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success,
    Unsolved,
    InvalidInput,
    Internal,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Unsolved => 2,
            ExitStatus::InvalidInput => 3,
            ExitStatus::Internal => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Mapf,
    Sfc,
    Rsfc,
    TimeAllocation,
    QpAssembly,
    Optimization,
    Scaling,
    Verify,
    Output,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Mapf => "mapf",
            Stage::Sfc => "sfc",
            Stage::Rsfc => "rsfc",
            Stage::TimeAllocation => "time_allocation",
            Stage::QpAssembly => "qp_assembly",
            Stage::Optimization => "optimization",
            Stage::Scaling => "scaling",
            Stage::Verify => "verify",
            Stage::Output => "output",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub mapf: f64,
    pub sfc: f64,
    pub rsfc: f64,
    pub time_allocation: f64,
    pub qp_assembly: f64,
    pub optimization: f64,
    pub scaling: f64,
    pub verify: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFailure {
    pub stage: Stage,
    /// Short machine-readable kind, e.g. `unreachable` or `infeasible`.
    pub reason: String,
    pub message: String,
    pub exit: ExitStatus,
    pub times: StageTimes,
}

impl fmt::Display for PlanFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage={} reason={}: {}", self.stage, self.reason, self.message)
    }
}

impl std::error::Error for PlanFailure {}

impl PlanFailure {
    fn new(stage: Stage, reason: &str, message: String, exit: ExitStatus) -> Self {
        Self { stage, reason: reason.to_string(), message, exit, times: StageTimes::default() }
    }

    pub fn from_input(e: &ScenarioError) -> Self {
        let reason = match e {
            ScenarioError::Io { .. } => "io",
            ScenarioError::Parse { .. } => "parse",
            _ => "invalid",
        };
        Self::new(Stage::Input, reason, e.to_string(), ExitStatus::InvalidInput)
    }

    fn from_mapf(e: &MapfError) -> Self {
        Self::new(Stage::Mapf, e.reason(), e.to_string(), ExitStatus::Unsolved)
    }

    fn from_sfc(e: &SfcError) -> Self {
        Self::new(Stage::Sfc, "waypoint_in_collision", e.to_string(), ExitStatus::Internal)
    }

    fn from_rsfc(e: &RsfcError) -> Self {
        match e {
            RsfcError::ZeroRelative { .. } => Self::new(Stage::Rsfc, "zero_relative", e.to_string(), ExitStatus::Internal),
            RsfcError::NoDirection { .. } => Self::new(Stage::Rsfc, "no_direction", e.to_string(), ExitStatus::Unsolved),
        }
    }

    fn from_time(e: &TimeAllocError) -> Self {
        Self::new(Stage::TimeAllocation, "bad_covers", e.to_string(), ExitStatus::Internal)
    }

    fn from_assembly(e: &AssembleError) -> Self {
        match e {
            AssembleError::Inconsistent { .. } => {
                Self::new(Stage::QpAssembly, "inconsistent", e.to_string(), ExitStatus::InvalidInput)
            }
            AssembleError::Dimension(_) => Self::new(Stage::QpAssembly, "dimension", e.to_string(), ExitStatus::Internal),
            AssembleError::MissingAssignment { .. } => {
                Self::new(Stage::QpAssembly, "missing_assignment", e.to_string(), ExitStatus::Internal)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QpStats {
    pub variables: usize,
    pub constraints: usize,
    pub equality_rows: usize,
    pub dropped_equality_rows: usize,
    pub sfc_rows: usize,
    pub rsfc_rows: usize,
    pub segments: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanOptions {
    /// Stop after the discrete planner.
    pub discrete_only: bool,
    /// Skip the verifier (its result is then `None`).
    pub skip_verify: bool,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub discrete: DiscretePlan,
    pub sfc: Vec<CorridorSequence>,
    pub rsfc: Vec<RsfcSequence>,
    pub segments: Option<TimeSegments>,
    pub layout: Option<Layout>,
    pub qp_stats: Option<QpStats>,
    pub qp_info: Option<QpInfo>,
    /// Scaled trajectories.
    pub bundle: Option<TrajectoryBundle>,
    /// Integrated squared derivative of the optimized (unscaled) trajectories.
    pub cost: Option<f64>,
    pub report: Option<VerifyReport>,
    pub times: StageTimes,
}

impl PlanOutcome {
    pub fn scale(&self) -> f64 {
        self.bundle.as_ref().map_or(1.0, |b| b.scale)
    }
}

pub fn qp_settings(config: &crate::PlannerConfig) -> QpSettings {
    QpSettings { eps_abs: config.qp_tol, eps_rel: config.qp_tol, max_iter: config.qp_max_iter, ..QpSettings::default() }
}

/// Runs every stage on a validated scenario. On failure the returned error
/// names the stage and carries the timings so far.
pub fn plan(scenario: &Scenario, options: PlanOptions) -> Result<PlanOutcome, PlanFailure> {
    let start = Instant::now();
    let mut times = StageTimes::default();
    let fail = |mut f: PlanFailure, times: &StageTimes| {
        f.times = *times;
        f.times.total = start.elapsed().as_secs_f64();
        f
    };
    let (map, agents, config) = (&scenario.map, &scenario.agents, &scenario.config);

    let t = Instant::now();
    let discrete = plan_discrete(map, agents, config);
    times.mapf = t.elapsed().as_secs_f64();
    let discrete = discrete.map_err(|e| fail(PlanFailure::from_mapf(&e), &times))?;

    let mut outcome = PlanOutcome {
        discrete,
        sfc: Vec::new(),
        rsfc: Vec::new(),
        segments: None,
        layout: None,
        qp_stats: None,
        qp_info: None,
        bundle: None,
        cost: None,
        report: None,
        times,
    };
    if options.discrete_only {
        outcome.times.total = start.elapsed().as_secs_f64();
        return Ok(outcome);
    }
    let discrete = &outcome.discrete;

    let t = Instant::now();
    let sfc = build_all_sfc(map, discrete, agents, config);
    times.sfc = t.elapsed().as_secs_f64();
    let sfc = sfc.map_err(|e| fail(PlanFailure::from_sfc(&e), &times))?;

    let t = Instant::now();
    let rsfc = build_all_rsfc(discrete, agents, config);
    times.rsfc = t.elapsed().as_secs_f64();
    let rsfc = rsfc.map_err(|e| fail(PlanFailure::from_rsfc(&e), &times))?;

    let t = Instant::now();
    let segments = (|| {
        let sp = sfc
            .iter()
            .zip(&discrete.waypoints)
            .map(|(s, w)| sfc_partial(s, w, config.time_delay))
            .collect::<Result<Vec<_>, _>>()?;
        let rp = rsfc
            .iter()
            .map(|r| rsfc_partial(r, &relative_waypoints(discrete, r.pair.0, r.pair.1), config.time_delay))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(allocate(&sp, &rp, discrete.l_max, config.t_step))
    })();
    times.time_allocation = t.elapsed().as_secs_f64();
    let segments = segments.map_err(|e: TimeAllocError| fail(PlanFailure::from_time(&e), &times))?;

    let t = Instant::now();
    let problem = assemble(agents, &sfc, &rsfc, &segments, config);
    times.qp_assembly = t.elapsed().as_secs_f64();
    let problem = problem.map_err(|e| fail(PlanFailure::from_assembly(&e), &times))?;
    let stats = QpStats {
        variables: problem.layout.n_vars(),
        constraints: problem.data.l.len(),
        equality_rows: problem.eq_rows,
        dropped_equality_rows: problem.dropped_eq_rows,
        sfc_rows: problem.sfc_rows,
        rsfc_rows: problem.rsfc_rows,
        segments: problem.layout.segments,
    };
    outcome.sfc = sfc;
    outcome.rsfc = rsfc;
    outcome.segments = Some(segments);
    outcome.layout = Some(problem.layout);
    outcome.qp_stats = Some(stats);

    let t = Instant::now();
    let result = solve(&problem.data, &qp_settings(config));
    times.optimization = t.elapsed().as_secs_f64();
    outcome.qp_info = Some(result.info.clone());
    match result.info.status {
        QpStatus::Solved => {}
        QpStatus::PrimalInfeasible => {
            let msg = format!("QP infeasible after {} iterations", result.info.iterations);
            return Err(fail(PlanFailure::new(Stage::Optimization, "infeasible", msg, ExitStatus::Unsolved), &times));
        }
        QpStatus::MaxIterations => {
            let msg = format!(
                "QP not converged in {} iterations (primal {:.2e}, dual {:.2e})",
                result.info.iterations, result.info.primal_residual, result.info.dual_residual
            );
            return Err(fail(PlanFailure::new(Stage::Optimization, "max_iterations", msg, ExitStatus::Unsolved), &times));
        }
    }
    outcome.cost = Some(problem.data.objective(&result.x));

    let t = Instant::now();
    let raw = TrajectoryBundle::new(extract_trajectories(&problem.layout, &problem.knots, &result.x), problem.knots.clone());
    let bundle = time_scale(&raw, config.v_max, config.a_max, config.sample_dt, config.scale_margin);
    times.scaling = t.elapsed().as_secs_f64();

    if !options.skip_verify {
        let t = Instant::now();
        let report = verify(&bundle, map, agents, config.downwash, config.sample_dt);
        times.verify = t.elapsed().as_secs_f64();
        let passed = report.passed;
        outcome.report = Some(report);
        if !passed {
            let n = outcome.report.as_ref().map_or(0, |r| r.violations.len());
            let msg = format!("{n} violations in the optimized trajectories");
            return Err(fail(PlanFailure::new(Stage::Verify, "verification_failed", msg, ExitStatus::Internal), &times));
        }
    }
    outcome.bundle = Some(bundle);
    times.total = start.elapsed().as_secs_f64();
    outcome.times = times;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::map::VoxelMap;
    use crate::scenario::{AgentSpec, PlannerConfig};

    fn empty_swap() -> Scenario {
        let map = VoxelMap::empty(Vec3::new(-3.0, -3.0, 0.0), 0.1, [60, 60, 25]).unwrap();
        let agents = vec![
            AgentSpec { id: 0, radius: 0.15, start: Vec3::new(-2.0, 0.0, 1.0), goal: Vec3::new(2.0, 0.0, 1.0) },
            AgentSpec { id: 1, radius: 0.15, start: Vec3::new(2.0, 0.0, 1.0), goal: Vec3::new(-2.0, 0.0, 1.0) },
        ];
        Scenario { map, agents, config: PlannerConfig::default() }
    }

    #[test]
    fn two_agent_swap_is_solved_and_verified() {
        let out = plan(&empty_swap(), PlanOptions::default()).unwrap();
        let report = out.report.as_ref().unwrap();
        assert!(report.passed, "{:?}", report.violations.first());
        let seg = out.segments.as_ref().unwrap();
        assert!(seg.segment_count() <= 2 * out.discrete.l_max - 1);
        assert!(out.scale() >= 1.0);
    }

    #[test]
    fn discrete_only_stops_early() {
        let out = plan(&empty_swap(), PlanOptions { discrete_only: true, ..Default::default() }).unwrap();
        assert!(out.sfc.is_empty() && out.bundle.is_none());
    }

    #[test]
    fn sealed_goal_fails_in_mapf() {
        let mut sc = empty_swap();
        // a closed shell around the first goal
        let g = sc.agents[0].goal;
        let shell = crate::geometry::Aabb::new(g - Vec3::new(0.6, 0.6, 0.6), g + Vec3::new(0.6, 0.6, 0.6));
        sc.map.fill_box(&shell);
        let hole = crate::geometry::Aabb::new(g - Vec3::new(0.4, 0.4, 0.4), g + Vec3::new(0.4, 0.4, 0.4));
        for k in 0..sc.map.dims()[2] {
            for j in 0..sc.map.dims()[1] {
                for i in 0..sc.map.dims()[0] {
                    if hole.contains(&sc.map.voxel_box(i, j, k).center()) {
                        sc.map.set_occupied(i, j, k, false);
                    }
                }
            }
        }
        let err = plan(&sc, PlanOptions::default()).unwrap_err();
        assert_eq!((err.stage, err.reason.as_str(), err.exit.code()), (Stage::Mapf, "unreachable", 2));
    }
}
