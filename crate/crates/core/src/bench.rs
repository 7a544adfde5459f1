//! Benchmark suites on random forest worlds: per-stage timing by agent count
//! and success rate by radius with and without the relative-corridor delay.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{plan, PlanOptions, StageTimes};
use crate::scenario::{generate_forest_with, ForestParams, PlannerConfig, Scenario};

pub const FOREST_PILLARS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub seed: u64,
    pub n_agents: usize,
    pub radius: f64,
    pub time_delay: bool,
    /// `solved`, or `stage:reason` of the failure.
    pub status: String,
    pub mapf: f64,
    pub sfc: f64,
    pub rsfc: f64,
    pub time_allocation: f64,
    pub qp_assembly: f64,
    pub optimization: f64,
    pub scaling: f64,
    pub verify: f64,
    pub total: f64,
    pub cost: Option<f64>,
    pub scale: Option<f64>,
    pub segments: Option<usize>,
    pub l_max: Option<usize>,
    pub qp_iterations: Option<usize>,
}

impl BenchRecord {
    pub fn solved(&self) -> bool {
        self.status == "solved"
    }

    /// Equal up to the wall-clock fields.
    pub fn same_result(&self, other: &Self) -> bool {
        self.without_times() == other.without_times()
    }

    fn without_times(&self) -> BenchRecord {
        BenchRecord {
            mapf: 0.0,
            sfc: 0.0,
            rsfc: 0.0,
            time_allocation: 0.0,
            qp_assembly: 0.0,
            optimization: 0.0,
            scaling: 0.0,
            verify: 0.0,
            total: 0.0,
            ..self.clone()
        }
    }
}

/// One forest trial: generate, plan, verify.
pub fn run_trial(seed: u64, n_agents: usize, radius: f64, time_delay: bool, base: &PlannerConfig) -> BenchRecord {
    let params = ForestParams { radius, ..ForestParams::default() };
    let config = PlannerConfig { time_delay, ..base.clone() };
    let mut rec = BenchRecord {
        seed,
        n_agents,
        radius,
        time_delay,
        status: String::new(),
        mapf: 0.0,
        sfc: 0.0,
        rsfc: 0.0,
        time_allocation: 0.0,
        qp_assembly: 0.0,
        optimization: 0.0,
        scaling: 0.0,
        verify: 0.0,
        total: 0.0,
        cost: None,
        scale: None,
        segments: None,
        l_max: None,
        qp_iterations: None,
    };
    let (map, agents) = match generate_forest_with(seed, n_agents, FOREST_PILLARS, &params) {
        Ok(x) => x,
        Err(e) => {
            rec.status = format!("input:{e}");
            return rec;
        }
    };
    let scenario = Scenario { map, agents, config };
    let set_times = |rec: &mut BenchRecord, t: &StageTimes| {
        rec.mapf = t.mapf;
        rec.sfc = t.sfc;
        rec.rsfc = t.rsfc;
        rec.time_allocation = t.time_allocation;
        rec.qp_assembly = t.qp_assembly;
        rec.optimization = t.optimization;
        rec.scaling = t.scaling;
        rec.verify = t.verify;
        rec.total = t.total;
    };
    match plan(&scenario, PlanOptions::default()) {
        Ok(out) => {
            rec.status = "solved".into();
            set_times(&mut rec, &out.times);
            rec.cost = out.cost;
            rec.scale = Some(out.scale());
            rec.segments = out.segments.as_ref().map(|s| s.segment_count());
            rec.l_max = Some(out.discrete.l_max);
            rec.qp_iterations = out.qp_info.as_ref().map(|i| i.iterations);
        }
        Err(f) => {
            rec.status = format!("{}:{}", f.stage, f.reason);
            set_times(&mut rec, &f.times);
        }
    }
    rec
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool")
}

/// `trials` forest scenarios per agent count with seeds `seed..seed + trials`.
/// Records come back ordered by count, then seed.
pub fn run_scaling_suite(
    counts: &[usize],
    trials: usize,
    seed: u64,
    radius: f64,
    config: &PlannerConfig,
    workers: usize,
) -> Vec<BenchRecord> {
    let jobs: Vec<(usize, u64)> =
        counts.iter().flat_map(|&n| (0..trials as u64).map(move |t| (n, seed + t))).collect();
    pool(workers).install(|| {
        jobs.par_iter().map(|&(n, s)| run_trial(s, n, radius, config.time_delay, config)).collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_agents: usize,
    pub trials: usize,
    pub solved: usize,
    pub mapf: f64,
    pub sfc: f64,
    pub rsfc: f64,
    pub optimization: f64,
    pub total: f64,
}

/// Mean stage times over the solved trials of each agent count.
pub fn summarize_scaling(records: &[BenchRecord]) -> Vec<ScalingRow> {
    let mut counts: Vec<usize> = records.iter().map(|r| r.n_agents).collect();
    counts.dedup();
    counts
        .into_iter()
        .map(|n| {
            let all: Vec<&BenchRecord> = records.iter().filter(|r| r.n_agents == n).collect();
            let ok: Vec<&&BenchRecord> = all.iter().filter(|r| r.solved()).collect();
            let mean = |f: fn(&BenchRecord) -> f64| {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            ScalingRow {
                n_agents: n,
                trials: all.len(),
                solved: ok.len(),
                mapf: mean(|r| r.mapf),
                sfc: mean(|r| r.sfc),
                rsfc: mean(|r| r.rsfc),
                optimization: mean(|r| r.time_allocation + r.qp_assembly + r.optimization),
                total: mean(|r| r.total),
            }
        })
        .collect()
}

/// Warnings for rows whose mean optimization time drops as agents are added.
pub fn scaling_warnings(rows: &[ScalingRow]) -> Vec<String> {
    rows.windows(2)
        .filter(|w| w[1].solved > 0 && w[0].solved > 0 && w[1].optimization < w[0].optimization)
        .map(|w| {
            format!(
                "mean optimization time fell from {:.3} s ({} agents) to {:.3} s ({} agents)",
                w[0].optimization, w[0].n_agents, w[1].optimization, w[1].n_agents
            )
        })
        .collect()
}

pub fn scaling_markdown(rows: &[ScalingRow]) -> String {
    let mut s = String::from("| agents | solved | mapf [s] | sfc [s] | rsfc [s] | optimization [s] | total [s] |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {}/{} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
            r.n_agents, r.solved, r.trials, r.mapf, r.sfc, r.rsfc, r.optimization, r.total
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub radius: f64,
    pub time_delay: bool,
    pub trials: usize,
    pub solved: usize,
    pub rate: f64,
}

pub const ABLATION_AGENTS: usize = 16;

/// Success rate per radius and delay setting. Both variants see the same
/// seeds, so each pair of rows compares identical worlds.
pub fn run_ablation(
    radii: &[f64],
    delays: &[bool],
    trials: usize,
    seed: u64,
    config: &PlannerConfig,
    workers: usize,
) -> (Vec<AblationRow>, Vec<BenchRecord>) {
    let jobs: Vec<(f64, bool, u64)> = radii
        .iter()
        .flat_map(|&r| delays.iter().flat_map(move |&d| (0..trials as u64).map(move |t| (r, d, seed + t))))
        .collect();
    let records: Vec<BenchRecord> = pool(workers).install(|| {
        jobs.par_iter().map(|&(r, d, s)| run_trial(s, ABLATION_AGENTS, r, d, config)).collect()
    });
    let rows = radii
        .iter()
        .flat_map(|&r| delays.iter().map(move |&d| (r, d)))
        .map(|(r, d)| {
            let solved = records.iter().filter(|x| x.radius == r && x.time_delay == d && x.solved()).count();
            AblationRow {
                radius: r,
                time_delay: d,
                trials,
                solved,
                rate: if trials == 0 { 0.0 } else { solved as f64 / trials as f64 },
            }
        })
        .collect();
    (rows, records)
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut s = String::from("| radius [m] | delay | solved | rate |\n|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {:.2} | {} | {}/{} | {:.2} |",
            r.radius,
            if r.time_delay { "on" } else { "off" },
            r.solved,
            r.trials,
            r.rate
        );
    }
    s
}

pub fn records_csv<W: std::io::Write>(writer: W, records: &[BenchRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
