mod support;

use rsfc::pipeline::{plan, ExitStatus, PlanOptions, Stage};
use rsfc::scenario::scenario_from_json;
use rsfc::{AgentSpec, PlannerConfig, Scenario, Vec3, VoxelMap};
use support::{forest, safety_check, smoothness};

fn open_room() -> VoxelMap {
    VoxelMap::empty(Vec3::new(-3.0, -3.0, 0.0), 0.1, [60, 60, 25]).unwrap()
}

fn agent(id: u32, start: [f64; 3], goal: [f64; 3]) -> AgentSpec {
    AgentSpec { id, radius: 0.15, start: Vec3::from(start), goal: Vec3::from(goal) }
}

fn check_solved(s: &Scenario) -> rsfc::pipeline::PlanOutcome {
    let out = plan(s, PlanOptions::default()).unwrap_or_else(|e| panic!("{e}"));
    let bundle = out.bundle.as_ref().unwrap();
    let stats = safety_check(&bundle.trajectories, &s.agents, &s.map, s.config.downwash, 0.01, 1e-9);
    assert_eq!(stats.obstacle_violations + stats.pair_violations, 0, "{stats:?}");
    let (jump, endpoint) = smoothness(&bundle.trajectories, &s.agents);
    assert!(jump <= 1e-6 && endpoint <= 1e-6, "jump {jump:.2e} endpoint {endpoint:.2e}");
    let m = out.segments.as_ref().unwrap().segment_count();
    assert!(m < 2 * out.discrete.l_max, "M {m} l_max {}", out.discrete.l_max);
    assert!(out.report.as_ref().unwrap().passed);
    out
}

#[test]
fn head_on_swap_in_open_room() {
    let s = Scenario {
        map: open_room(),
        agents: vec![agent(0, [-2.0, 0.0, 1.0], [2.0, 0.0, 1.0]), agent(1, [2.0, 0.0, 1.0], [-2.0, 0.0, 1.0])],
        config: PlannerConfig::default(),
    };
    check_solved(&s);
}

#[test]
fn crossing_four_agents_with_and_without_delay() {
    for delay in [true, false] {
        let s = Scenario {
            map: open_room(),
            agents: vec![
                agent(0, [-2.0, 0.0, 1.0], [2.0, 0.0, 1.0]),
                agent(1, [2.0, 0.0, 1.0], [-2.0, 0.0, 1.0]),
                agent(2, [0.0, -2.0, 1.0], [0.0, 2.0, 1.0]),
                agent(3, [0.0, 2.0, 1.0], [0.0, -2.0, 1.0]),
            ],
            config: PlannerConfig { time_delay: delay, ..Default::default() },
        };
        check_solved(&s);
    }
}

#[test]
fn single_agent_straight_line_is_minimum_jerk() {
    let s = Scenario {
        map: open_room(),
        agents: vec![agent(0, [-2.0, 0.0, 1.0], [2.0, 0.0, 1.0])],
        config: PlannerConfig::default(),
    };
    let out = check_solved(&s);
    let b = out.bundle.as_ref().unwrap();
    let dur = b.duration();
    for k in 0..=100 {
        let t = dur * k as f64 / 100.0;
        let p = b.trajectories[0].eval(t);
        let q = support::quintic(-2.0, 2.0, dur, t)[0];
        assert!((p.x - q).abs() <= 1e-6, "t {t}: {} vs {q}", p.x);
        assert!(p.y.abs() <= 1e-6 && (p.z - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn forest_instances_solve_and_verify() {
    for seed in 0..3 {
        check_solved(&forest(seed, 6, 0.15));
    }
}

#[test]
fn planning_is_deterministic() {
    let s = forest(5, 5, 0.15);
    let a = plan(&s, PlanOptions::default()).unwrap();
    let b = plan(&s, PlanOptions::default()).unwrap();
    assert_eq!(a.discrete, b.discrete);
    assert_eq!(a.segments, b.segments);
    assert_eq!(a.bundle, b.bundle);
}

#[test]
fn sealed_goal_fails_in_mapf() {
    let map = r#"{"origin":[0,0,0],"voxel_size":0.1,"dims":[40,40,20],
        "boxes":[{"min":[2.5,0,0],"max":[3,4,2]}]}"#;
    let scen = r#"{"agents":[{"id":0,"radius":0.15,"start":[0.5,1,1],"goal":[3.5,1,1]}]}"#;
    let s = scenario_from_json(map, scen).unwrap();
    let e = plan(&s, PlanOptions::default()).unwrap_err();
    assert_eq!(e.stage, Stage::Mapf);
    assert_eq!(e.reason, "unreachable");
    assert_eq!(e.exit, ExitStatus::Unsolved);
}

#[test]
fn invalid_inputs_are_rejected() {
    let map = r#"{"origin":[0,0,0],"voxel_size":0.1,"dims":[40,40,20]}"#;
    let dup = r#"{"agents":[{"id":0,"radius":0.15,"start":[0.5,1,1],"goal":[3.5,1,1]},
                            {"id":0,"radius":0.15,"start":[1.5,1,1],"goal":[2.5,1,1]}]}"#;
    assert!(scenario_from_json(map, dup).is_err());
    let outside = r#"{"agents":[{"id":0,"radius":0.15,"start":[0.5,1,1],"goal":[9,1,1]}]}"#;
    assert!(scenario_from_json(map, outside).is_err());
    let bad_radius = r#"{"agents":[{"id":0,"radius":-1,"start":[0.5,1,1],"goal":[3.5,1,1]}]}"#;
    assert!(scenario_from_json(map, bad_radius).is_err());
    assert!(scenario_from_json("{", dup).is_err());
}

#[test]
fn discrete_only_stops_after_mapf() {
    let s = forest(0, 4, 0.15);
    let out = plan(&s, PlanOptions { discrete_only: true, ..Default::default() }).unwrap();
    assert!(out.bundle.is_none() && out.segments.is_none());
    assert_eq!(out.discrete.agent_count(), 4);
}
