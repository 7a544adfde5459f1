use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rsfc::bench::{
    ablation_markdown, records_csv, run_ablation, run_scaling_suite, scaling_markdown, scaling_warnings,
    summarize_scaling, FOREST_PILLARS,
};
use rsfc::output::{save_csv, save_svg, write_json, PlanDocument};
use rsfc::pipeline::{plan, ExitStatus, PlanFailure, PlanOptions, Stage, StageTimes};
use rsfc::postprocess::verify;
use rsfc::scenario::{generate_forest_files, load_map, load_scenario, ForestParams, PlannerConfig, ScenarioFile};

#[derive(Parser)]
#[command(name = "rsfc", version, about = "Multi-quadrotor trajectory planner")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan trajectories for a map and a mission file.
    Plan(PlanArgs),
    /// Re-check a saved plan against a map.
    Verify(VerifyArgs),
    /// Render a saved plan as a top-down SVG.
    Plot(PlotArgs),
    /// Write a random forest map and mission.
    Generate(GenerateArgs),
    /// Benchmark suites on random forests.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Write the corridors of every agent to sfc.json.
    #[arg(long)]
    dump_sfc: bool,
    /// Write the relative corridors of every pair to rsfc.json.
    #[arg(long)]
    dump_rsfc: bool,
    /// Write the full plan document to plan.json.
    #[arg(long)]
    dump_plan: bool,
    /// Stop after the discrete planner and write discrete.json.
    #[arg(long)]
    discrete_only: bool,
    #[arg(long)]
    qp_tol: Option<f64>,
    #[arg(long)]
    qp_max_iter: Option<usize>,
    /// Node-expansion budget of the discrete planner.
    #[arg(long)]
    mapf_budget: Option<usize>,
    /// Turn the relative-corridor time delay on or off.
    #[arg(long)]
    time_delay: Option<bool>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Sampling step; defaults to the one stored in the plan.
    #[arg(long)]
    sample_dt: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// File name inside the output directory.
    #[arg(long, default_value = "plan.svg")]
    out_svg: String,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    agents: usize,
    #[arg(long, default_value_t = FOREST_PILLARS)]
    pillars: usize,
    #[arg(long, default_value_t = 0.15)]
    radius: f64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DelayChoice {
    On,
    Off,
    Both,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Per-stage timing by agent count.
    Scaling {
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16])]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.15)]
        radius: f64,
        /// CSV file name inside the output directory.
        #[arg(long, default_value = "results.csv")]
        out: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Success rate by radius with and without the time delay.
    Ablation {
        #[arg(long, value_delimiter = ',', default_values_t = [0.15f64, 0.2, 0.25, 0.3])]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "both")]
        delay: DelayChoice,
        #[arg(long, default_value = "ablation.csv")]
        out: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

/// Failure of a command: exit code plus a one-line message.
struct Fail(ExitStatus, String);

impl From<PlanFailure> for Fail {
    fn from(f: PlanFailure) -> Self {
        Fail(f.exit, f.to_string())
    }
}

fn io_fail(e: impl std::fmt::Display) -> Fail {
    Fail(ExitStatus::Internal, format!("stage=output reason=io: {e}"))
}

fn ensure_dir(dir: &Path) -> Result<(), Fail> {
    fs::create_dir_all(dir).map_err(|e| io_fail(format!("{}: {e}", dir.display())))
}

#[derive(Serialize)]
struct Summary<'a> {
    status: &'a str,
    stage: Option<Stage>,
    reason: Option<&'a str>,
    message: Option<&'a str>,
    exit_code: i32,
    times: StageTimes,
    cost: Option<f64>,
    scale: Option<f64>,
    l_max: Option<usize>,
}

fn cmd_plan(args: &PlanArgs) -> Result<(), Fail> {
    let mut scenario = load_scenario(&args.map, &args.scenario).map_err(|e| Fail::from(PlanFailure::from_input(&e)))?;
    if let Some(tol) = args.qp_tol {
        scenario.config.qp_tol = tol;
    }
    if let Some(it) = args.qp_max_iter {
        scenario.config.qp_max_iter = it;
    }
    if let Some(b) = args.mapf_budget {
        scenario.config.mapf_budget = b;
    }
    if let Some(d) = args.time_delay {
        scenario.config.time_delay = d;
    }
    scenario.config.validate().map_err(|e| Fail::from(PlanFailure::from_input(&e)))?;
    ensure_dir(&args.out_dir)?;
    let dir = &args.out_dir;

    let options = PlanOptions { discrete_only: args.discrete_only, skip_verify: false };
    let result = plan(&scenario, options);
    let summary_path = dir.join("summary.json");
    let outcome = match result {
        Ok(o) => o,
        Err(f) => {
            let summary = Summary {
                status: "failed",
                stage: Some(f.stage),
                reason: Some(&f.reason),
                message: Some(&f.message),
                exit_code: f.exit.code(),
                times: f.times,
                cost: None,
                scale: None,
                l_max: None,
            };
            write_json(&summary_path, &summary).map_err(io_fail)?;
            return Err(f.into());
        }
    };

    if args.discrete_only {
        write_json(&dir.join("discrete.json"), &outcome.discrete).map_err(io_fail)?;
    }
    if args.dump_sfc {
        write_json(&dir.join("sfc.json"), &outcome.sfc).map_err(io_fail)?;
    }
    if args.dump_rsfc {
        write_json(&dir.join("rsfc.json"), &outcome.rsfc).map_err(io_fail)?;
    }
    if let Some(doc) = PlanDocument::from_outcome(&outcome, &scenario.agents, &scenario.config) {
        save_csv(&dir.join("trajectories.csv"), &doc.bundle, &doc.agents, scenario.config.sample_dt).map_err(io_fail)?;
        if args.dump_plan {
            doc.save(&dir.join("plan.json")).map_err(io_fail)?;
        }
    }
    let summary = Summary {
        status: if args.discrete_only { "discrete" } else { "solved" },
        stage: None,
        reason: None,
        message: None,
        exit_code: 0,
        times: outcome.times,
        cost: outcome.cost,
        scale: outcome.bundle.as_ref().map(|b| b.scale),
        l_max: Some(outcome.discrete.l_max),
    };
    write_json(&summary_path, &summary).map_err(io_fail)?;
    println!(
        "solved {} agents: l_max {}, cost {}, scale {:.3}, total {:.3} s",
        scenario.agents.len(),
        outcome.discrete.l_max,
        outcome.cost.map_or("-".to_string(), |c| format!("{c:.4}")),
        outcome.scale(),
        outcome.times.total
    );
    Ok(())
}

fn load_inputs(map: &Path, plan: &Path) -> Result<(rsfc::map::VoxelMap, PlanDocument), Fail> {
    let map = load_map(map).map_err(|e| Fail::from(PlanFailure::from_input(&e)))?;
    let doc = PlanDocument::load(plan).map_err(|e| Fail(ExitStatus::InvalidInput, format!("stage=input reason=parse: {e}")))?;
    Ok((map, doc))
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Fail> {
    let (map, doc) = load_inputs(&args.map, &args.plan)?;
    let dt = args.sample_dt.unwrap_or(doc.config.sample_dt);
    if !(dt > 0.0) {
        return Err(Fail(ExitStatus::InvalidInput, "stage=input reason=invalid: sample_dt must be positive".into()));
    }
    let report = verify(&doc.bundle, &map, &doc.agents, doc.config.downwash, dt);
    ensure_dir(&args.out_dir)?;
    write_json(&args.out_dir.join("verify.json"), &report).map_err(io_fail)?;
    if report.passed {
        println!("passed: min obstacle slack {:.4} m", report.min_obstacle_slack);
        Ok(())
    } else {
        Err(Fail(
            ExitStatus::Unsolved,
            format!("stage=verify reason=verification_failed: {} violations", report.violations.len()),
        ))
    }
}

fn cmd_plot(args: &PlotArgs) -> Result<(), Fail> {
    let (map, doc) = load_inputs(&args.map, &args.plan)?;
    ensure_dir(&args.out_dir)?;
    save_svg(&args.out_dir.join(&args.out_svg), &map, &doc).map_err(io_fail)
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), Fail> {
    let params = ForestParams { radius: args.radius, ..ForestParams::default() };
    let (map, agents) = generate_forest_files(args.seed, args.agents, args.pillars, &params)
        .map_err(|e| Fail(ExitStatus::InvalidInput, format!("stage=input reason=generation: {e}")))?;
    ensure_dir(&args.out_dir)?;
    write_json(&args.out_dir.join("map.json"), &map).map_err(io_fail)?;
    let file = ScenarioFile { agents, config: PlannerConfig::default() };
    write_json(&args.out_dir.join("scenario.json"), &file).map_err(io_fail)
}

fn save_records(dir: &Path, name: &str, records: &[rsfc::bench::BenchRecord]) -> Result<(), Fail> {
    let f = fs::File::create(dir.join(name)).map_err(io_fail)?;
    records_csv(std::io::BufWriter::new(f), records).map_err(io_fail)
}

fn cmd_bench(cmd: &BenchCommand, workers: usize) -> Result<(), Fail> {
    let config = PlannerConfig::default();
    match cmd {
        BenchCommand::Scaling { counts, trials, seed, radius, out, out_dir } => {
            ensure_dir(out_dir)?;
            let records = run_scaling_suite(counts, *trials, *seed, *radius, &config, workers);
            save_records(out_dir, out, &records)?;
            let rows = summarize_scaling(&records);
            let md = scaling_markdown(&rows);
            fs::write(out_dir.join("scaling.md"), &md).map_err(io_fail)?;
            print!("{md}");
            for w in scaling_warnings(&rows) {
                eprintln!("warning: {w}");
            }
        }
        BenchCommand::Ablation { radii, trials, seed, delay, out, out_dir } => {
            ensure_dir(out_dir)?;
            let delays: &[bool] = match delay {
                DelayChoice::On => &[true],
                DelayChoice::Off => &[false],
                DelayChoice::Both => &[true, false],
            };
            let (rows, records) = run_ablation(radii, delays, *trials, *seed, &config, workers);
            save_records(out_dir, out, &records)?;
            let md = ablation_markdown(&rows);
            fs::write(out_dir.join("ablation.md"), &md).map_err(io_fail)?;
            print!("{md}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(ExitStatus::InvalidInput.code() as u8) } else { ExitCode::SUCCESS };
        }
    };
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if cli.workers.is_some() {
        // ignore the error if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build_global();
    }
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Bench(b) => cmd_bench(b, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(status, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(status.code() as u8)
        }
    }
}
