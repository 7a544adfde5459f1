//! Plan artifacts: sampled CSV, plan JSON and a top-down SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::VoxelMap;
use crate::pipeline::{PlanOutcome, QpStats, StageTimes};
use crate::postprocess::{TrajectoryBundle, VerifyReport};
use crate::qp::QpInfo;
use crate::scenario::{AgentSpec, PlannerConfig};
use crate::sfc::CorridorSequence;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

/// Everything needed to re-verify or plot a plan without re-planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub agents: Vec<AgentSpec>,
    pub config: PlannerConfig,
    pub bundle: TrajectoryBundle,
    #[serde(default)]
    pub corridors: Vec<CorridorSequence>,
    #[serde(default)]
    pub cost: Option<f64>,
    #[serde(default)]
    pub solver: Option<QpInfo>,
    #[serde(default)]
    pub qp_stats: Option<QpStats>,
    #[serde(default)]
    pub times: StageTimes,
    #[serde(default)]
    pub report: Option<VerifyReport>,
}

impl PlanDocument {
    /// Builds the document from a finished plan; `None` if the plan has no
    /// trajectories (discrete-only runs).
    pub fn from_outcome(outcome: &PlanOutcome, agents: &[AgentSpec], config: &PlannerConfig) -> Option<Self> {
        Some(Self {
            agents: agents.to_vec(),
            config: config.clone(),
            bundle: outcome.bundle.clone()?,
            corridors: outcome.sfc.clone(),
            cost: outcome.cost,
            solver: outcome.qp_info.clone(),
            qp_stats: outcome.qp_stats,
            times: outcome.times,
            report: outcome.report.clone(),
        })
    }

    pub fn empty(config: &PlannerConfig) -> Self {
        Self {
            agents: Vec::new(),
            config: config.clone(),
            bundle: TrajectoryBundle::new(Vec::new(), vec![0.0]),
            corridors: Vec::new(),
            cost: None,
            solver: None,
            qp_stats: None,
            times: StageTimes::default(),
            report: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), OutputError> {
        fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, OutputError> {
        let s = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&s).map_err(|source| OutputError::Json { path: path.display().to_string(), source })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let s = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, s).map_err(io_err(path))
}

/// Samples every agent at `0, dt, 2 dt, ...` up to the plan duration and
/// writes `t, agent_id, x, y, z, vx, vy, vz, ax, ay, az`, grouped by agent.
pub fn write_csv<W: std::io::Write>(writer: W, bundle: &TrajectoryBundle, agents: &[AgentSpec], dt: f64) -> Result<usize, OutputError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "agent_id", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"])?;
    let times = bundle.sample_times(dt);
    let mut rows = 0;
    for (agent, traj) in agents.iter().zip(&bundle.trajectories) {
        for &t in &times {
            let [p, v, a] = traj.eval_derivs(t);
            let mut rec = vec![format!("{t:.6}"), agent.id.to_string()];
            rec.extend([p, v, a].iter().flat_map(|x| x.iter().map(|c| format!("{c:.9}"))));
            w.write_record(&rec)?;
            rows += 1;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(rows)
}

pub fn save_csv(path: &Path, bundle: &TrajectoryBundle, agents: &[AgentSpec], dt: f64) -> Result<usize, OutputError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_csv(std::io::BufWriter::new(f), bundle, agents, dt)
}

const PX_PER_M: f64 = 60.0;

fn agent_color(i: usize, n: usize) -> String {
    let hue = (360 * i / n.max(1)) % 360;
    format!("hsl({hue},75%,42%)")
}

/// Top-down view: occupied columns in gray, corridors as translucent
/// rectangles, one polyline per agent, circles at starts and squares at
/// goals. Output depends only on the inputs.
pub fn render_svg(map: &VoxelMap, doc: &PlanDocument) -> String {
    let b = map.bounds();
    let w = (b.max.x - b.min.x) * PX_PER_M;
    let h = (b.max.y - b.min.y) * PX_PER_M;
    let px = |x: f64| (x - b.min.x) * PX_PER_M;
    let py = |y: f64| (b.max.y - y) * PX_PER_M;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="#ffffff" stroke="#000000"/>"##);

    // obstacles: columns with any occupied voxel, merged into runs along x
    let [nx, ny, nz] = map.dims();
    let vs = map.voxel_size();
    let o = map.origin();
    let _ = writeln!(s, r##"<g fill="#808080">"##);
    for j in 0..ny {
        let mut i = 0;
        while i < nx {
            let occ = |i: usize| (0..nz).any(|k| map.is_occupied(i, j, k));
            if !occ(i) {
                i += 1;
                continue;
            }
            let start = i;
            while i < nx && occ(i) {
                i += 1;
            }
            let x0 = o.x + start as f64 * vs;
            let y1 = o.y + (j + 1) as f64 * vs;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                px(x0),
                py(y1),
                (i - start) as f64 * vs * PX_PER_M,
                vs * PX_PER_M
            );
        }
    }
    let _ = writeln!(s, "</g>");

    let n = doc.agents.len();
    for seq in &doc.corridors {
        let idx = doc.agents.iter().position(|a| a.id == seq.agent).unwrap_or(0);
        let color = agent_color(idx, n);
        let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.06" stroke="{color}" stroke-opacity="0.3">"#);
        for c in &seq.corridors {
            let bb = &c.bbox;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                px(bb.min.x),
                py(bb.max.y),
                (bb.max.x - bb.min.x) * PX_PER_M,
                (bb.max.y - bb.min.y) * PX_PER_M
            );
        }
        let _ = writeln!(s, "</g>");
    }

    let duration = doc.bundle.duration();
    let step = (duration / 400.0).max(doc.config.sample_dt);
    for (i, (agent, traj)) in doc.agents.iter().zip(&doc.bundle.trajectories).enumerate() {
        let color = agent_color(i, n);
        let mut pts = String::new();
        for t in doc.bundle.sample_times(step).into_iter().chain([duration]) {
            let p = traj.eval(t);
            let _ = write!(pts, "{:.2},{:.2} ", px(p.x), py(p.y));
        }
        let _ = writeln!(
            s,
            r#"<polyline data-agent="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            agent.id,
            pts.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{color}"/>"#,
            px(agent.start.x),
            py(agent.start.y)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="none" stroke="{color}" stroke-width="2"/>"#,
            px(agent.goal.x) - 5.0,
            py(agent.goal.y) - 5.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn save_svg(path: &Path, map: &VoxelMap, doc: &PlanDocument) -> Result<(), OutputError> {
    fs::write(path, render_svg(map, doc)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::{BernsteinPiece, PiecewiseBernstein};
    use crate::geometry::Vec3;
    use crate::postprocess::verify;

    fn one_agent() -> (VoxelMap, PlanDocument) {
        let mut map = VoxelMap::empty(Vec3::new(-2.0, -2.0, 0.0), 0.1, [40, 40, 20]).unwrap();
        map.set_occupied(5, 5, 3, true);
        let a = AgentSpec { id: 7, radius: 0.15, start: Vec3::new(-1.0, 0.0, 1.0), goal: Vec3::new(1.0, 0.5, 1.0) };
        let (s, g) = (a.start, a.goal);
        let traj = PiecewiseBernstein { pieces: vec![BernsteinPiece { controls: vec![s, s, s, g, g, g], t0: 0.0, t1: 2.345 }] };
        let mut doc = PlanDocument::empty(&PlannerConfig::default());
        doc.agents.push(a);
        doc.bundle = TrajectoryBundle::new(vec![traj], vec![0.0, 2.345]);
        (map, doc)
    }

    #[test]
    fn csv_row_count() {
        let (_, doc) = one_agent();
        let mut buf = Vec::new();
        let rows = write_csv(&mut buf, &doc.bundle, &doc.agents, 0.01).unwrap();
        assert_eq!(rows, 235);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 236);
        assert!(text.starts_with("t,agent_id,x,y,z,vx,vy,vz,ax,ay,az"));
    }

    #[test]
    fn json_round_trip_gives_identical_report() {
        let (map, doc) = one_agent();
        let r1 = verify(&doc.bundle, &map, &doc.agents, 2.0, 0.01);
        let back = PlanDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(verify(&back.bundle, &map, &back.agents, 2.0, 0.01), r1);
    }

    #[test]
    fn svg_is_deterministic_with_one_polyline_per_agent() {
        let (map, doc) = one_agent();
        let a = render_svg(&map, &doc);
        assert_eq!(a, render_svg(&map, &doc));
        assert_eq!(a.matches("<polyline").count(), 1);
        let empty = render_svg(&map, &PlanDocument::empty(&PlannerConfig::default()));
        assert!(empty.starts_with("<svg") && empty.ends_with("</svg>\n"));
        assert_eq!(empty.matches("<polyline").count(), 0);
    }
}
