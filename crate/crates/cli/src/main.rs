mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use swarm_infer::ga::{evolve, generate_dataset, read_jsonl, write_jsonl, GaConfig};
use swarm_infer::model::RouteOrder;
use swarm_infer::qlearning::{train, QTable};
use swarm_infer::sim::{benchmark, run, traces_to_csv, BenchmarkReport, MetricsRecord, Planner, RunOutput, Scenario};
use swarm_infer::world_model::{LevelScores, WorldModel};
use swarm_infer::Error;

use config::{resolve_seed, sha256_hex, RunConfig, SEED_ENV};

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "swarm-infer", version, about = "Multi-UAV world-model planning pipeline")]
struct Cli {
    /// JSON file with a full or partial run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Flat `key=value` override, repeatable (e.g. `ga.generations=50`).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed; falls back to SWARM_INFER_SEED, then the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerKind {
    Ai,
    Ql,
    Replay,
}

impl PlannerKind {
    fn label(self) -> &'static str {
        match self {
            PlannerKind::Ai => "ai",
            PlannerKind::Ql => "ql",
            PlannerKind::Replay => "replay",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate GA–RF expert demonstrations (JSONL plus manifest).
    GenDemos {
        #[arg(long)]
        out: PathBuf,
        /// Number of missions; defaults to `num_missions`.
        #[arg(long)]
        num: Option<usize>,
    },
    /// Symbolize demonstrations and fit the world model (and the QL table).
    BuildModel {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also train the Q-learning baseline on the same data.
        #[arg(long)]
        qtable_out: Option<PathBuf>,
    },
    /// Run one scenario with one planner.
    Simulate {
        #[arg(long, value_enum)]
        planner: PlannerKind,
        /// Scenario JSON; sampled from the seed when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        qtable: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired benchmark over sampled scenarios.
    Benchmark {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        qtable: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of scenarios; defaults to `num_scenarios`.
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "ai,ql,replay")]
        planners: Vec<PlannerKind>,
        /// Repeat the suite for each fleet size, writing `<out>/q<Q>/`.
        #[arg(long, value_delimiter = ',')]
        fleet_sizes: Vec<usize>,
    },
    /// Turn simulate/benchmark outputs into per-figure tidy CSVs.
    ExportPlots {
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// A `simulate` output directory.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::StepCapExceeded(_)) => 3,
            CliError::Core(Error::InvariantBreach(_)) => 4,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Wraps every JSON output with its schema version and config hash.
#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    config_hash: String,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, config_hash: &str, body: T) -> CliResult<()> {
    let env = Envelope {
        schema_version: OUTPUT_SCHEMA_VERSION,
        config_hash: config_hash.to_string(),
        body,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn csv_header(config_hash: &str) -> String {
    format!("# schema_version={OUTPUT_SCHEMA_VERSION} config_hash={config_hash}\n")
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    world_model: Value,
}

fn load_model(path: &Path) -> CliResult<WorldModel> {
    let text = read_text(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let inner = value.get("world_model").cloned().unwrap_or(value);
    Ok(WorldModel::from_json(&inner.to_string())?)
}

fn load_qtable(path: &Path) -> CliResult<QTable> {
    let text = read_text(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let inner = value.get("qtable").cloned().unwrap_or(value);
    Ok(QTable::from_json(&inner.to_string())?)
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let base = match &cli.config {
        Some(p) => {
            let partial: Value = serde_json::from_str(&read_text(p)?)?;
            let mut full = serde_json::to_value(RunConfig::default())?;
            merge(&mut full, partial);
            serde_json::from_value(full).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let mut config = base.with_overrides(&cli.overrides).map_err(CliError::Input)?;
    let env = std::env::var(SEED_ENV).ok();
    config.seed = resolve_seed(cli.seed, env.as_deref(), config.seed).map_err(CliError::Input)?;
    Ok(config)
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn cmd_gen_demos(config: &RunConfig, out: &Path, num: Option<usize>) -> CliResult<()> {
    let m = num.unwrap_or(config.num_missions);
    let demos = generate_dataset(m, &config.demos, &config.ga, &config.sim.separation, &config.sim.potential, config.seed)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &demos)?;
    fs::write(out, &buf)?;
    let manifest = serde_json::json!({
        "command": "gen-demos",
        "seed": config.seed,
        "num_missions": m,
        "num_targets": config.demos.num_targets,
        "fleet_size": config.demos.fleet_size,
        "dataset_sha256": sha256_hex(&buf),
        "config": config,
    });
    let manifest_path = PathBuf::from(format!("{}.manifest.json", out.display()));
    write_json(&manifest_path, &config.hash(), manifest)?;
    println!("wrote {m} demonstrations to {}", out.display());
    Ok(())
}

fn cmd_build_model(config: &RunConfig, dataset: &Path, out: &Path, qtable_out: Option<&Path>) -> CliResult<()> {
    let file = File::open(dataset).map_err(|e| CliError::Input(format!("{}: {e}", dataset.display())))?;
    let demos = read_jsonl(BufReader::new(file))?;
    let (model, symbolic) = WorldModel::from_demonstrations(&demos, &config.fit, &config.sim.potential)?;
    let model_value: Value = serde_json::from_str(&model.to_json()?)?;
    write_json(out, &config.hash(), ModelFile { world_model: model_value })?;
    println!(
        "dictionaries: {} spatial letters, {} motion letters, {} mission rows, {} route contexts, {} motion contexts",
        model.spatial.size(),
        model.motion_alphabet.size(),
        model.mission.values().map(Vec::len).sum::<usize>(),
        model.route.len(),
        model.motion.len()
    );
    let scores: Vec<LevelScores> = symbolic.iter().map(|d| model.demo_scores(d)).collect();
    for (name, pick) in [
        ("mission", (|s: &LevelScores| s.mission) as fn(&LevelScores) -> f64),
        ("route", |s| s.route),
        ("motion", |s| s.motion),
        ("total", |s| s.total()),
    ] {
        let mut v: Vec<f64> = scores.iter().map(pick).collect();
        v.sort_by(f64::total_cmp);
        println!("abnormality {name:>7}: p50 {:.3}  p95 {:.3}  max {:.3}", percentile(&v, 0.5), percentile(&v, 0.95), percentile(&v, 1.0));
    }
    if let Some(path) = qtable_out {
        let table = train(&demos, model.spatial, &swarm_infer::qlearning::QlConfig { seed: config.seed, ..config.ql })?;
        let value: Value = serde_json::from_str(&table.to_json()?)?;
        write_json(path, &config.hash(), serde_json::json!({ "qtable": value }))?;
        println!("q-table: {} states", table.values.len());
    }
    Ok(())
}

/// GA–RF routes for a scenario's initial targets.
fn ga_routes(config: &RunConfig, scenario: &Scenario) -> CliResult<RouteOrder> {
    let inst = &scenario.instance;
    if inst.targets.is_empty() {
        return Ok(RouteOrder::new(vec![Vec::new(); inst.fleet_size]));
    }
    let ga = GaConfig {
        rng_seed: config.seed ^ scenario.seed,
        ..config.ga
    };
    Ok(evolve(inst, &ga, &config.sim.separation, &config.sim.potential)?.demonstration.orders)
}

fn metrics_csv(config_hash: &str, metrics: &[&MetricsRecord]) -> String {
    let mut out = csv_header(config_hash);
    out.push_str("planner,seed,complete,completion_time,total_distance,min_separation,min_obstacle_clearance,separation_violation_steps,penetration_steps,replans,leg_timeouts,targets_total,targets_visited\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m.planner,
            m.seed,
            m.complete,
            m.completion_time,
            m.total_distance,
            opt(m.min_separation),
            opt(m.min_obstacle_clearance),
            m.separation_violation_steps,
            m.penetration_steps,
            m.replans,
            m.leg_timeouts,
            m.targets_total,
            m.visited.len()
        ));
    }
    out
}

fn cmd_simulate(config: &RunConfig, kind: PlannerKind, scenario: Option<&Path>, model: Option<&Path>, qtable: Option<&Path>, out: &Path) -> CliResult<()> {
    let scenario = match scenario {
        Some(p) => Scenario::from_json(&read_text(p)?)?,
        None => config.scenario.sample(config.seed, 0)?,
    };
    let hash = config.hash();
    let loaded_model: WorldModel;
    let loaded_table: QTable;
    let routes: RouteOrder;
    let planner = match kind {
        PlannerKind::Ai => {
            loaded_model = load_model(model.ok_or_else(|| CliError::Input("--planner ai needs --model".into()))?)?;
            Planner::ActiveInference {
                model: &loaded_model,
                config: config.planner,
            }
        }
        PlannerKind::Ql => {
            loaded_table = load_qtable(qtable.ok_or_else(|| CliError::Input("--planner ql needs --qtable".into()))?)?;
            Planner::QLearning(&loaded_table)
        }
        PlannerKind::Replay => {
            routes = ga_routes(config, &scenario)?;
            Planner::Replay(&routes)
        }
    };
    let RunOutput { metrics, traces } = run(&scenario, planner, &config.sim)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("metrics.json"), &hash, &metrics)?;
    fs::write(out.join("metrics.csv"), metrics_csv(&hash, &[&metrics]))?;
    let mut trace = csv_header(&hash);
    trace.push_str(&traces_to_csv(&traces));
    fs::write(out.join("trace.csv"), trace)?;
    fs::write(out.join("scenario.json"), scenario.to_json()? + "\n")?;
    println!(
        "{}: complete={} time={:.1}s distance={:.1}m replans={} min_separation={:?}",
        kind.label(),
        metrics.complete,
        metrics.completion_time,
        metrics.total_distance,
        metrics.replans,
        metrics.min_separation
    );
    if !metrics.complete {
        return Err(Error::StepCapExceeded(metrics.steps).into());
    }
    Ok(())
}

fn cmd_benchmark(config: &RunConfig, model: Option<&Path>, qtable: Option<&Path>, out: &Path, count: Option<usize>, kinds: &[PlannerKind]) -> CliResult<()> {
    let n = count.unwrap_or(config.num_scenarios);
    if n == 0 {
        return Err(CliError::Input("need at least one scenario".into()));
    }
    let scenarios: Vec<Scenario> = (0..n as u64).map(|i| config.scenario.sample(config.seed, i)).collect::<Result<_, _>>()?;
    let model = match (kinds.contains(&PlannerKind::Ai), model) {
        (true, Some(p)) => Some(load_model(p)?),
        (true, None) => return Err(CliError::Input("planner ai needs --model".into())),
        _ => None,
    };
    let table = match (kinds.contains(&PlannerKind::Ql), qtable) {
        (true, Some(p)) => Some(load_qtable(p)?),
        (true, None) => return Err(CliError::Input("planner ql needs --qtable".into())),
        _ => None,
    };
    let routes: Vec<std::result::Result<RouteOrder, String>> = if kinds.contains(&PlannerKind::Replay) {
        scenarios.par_iter().map(|s| ga_routes(config, s).map_err(|e| e.to_string())).collect()
    } else {
        Vec::new()
    };
    let labels: Vec<&str> = kinds.iter().map(|k| k.label()).collect();
    let report: BenchmarkReport = benchmark(
        &scenarios,
        &labels,
        |i, label| match label {
            "ai" => Ok(Planner::ActiveInference {
                model: model.as_ref().expect("loaded above"),
                config: config.planner,
            }),
            "ql" => Ok(Planner::QLearning(table.as_ref().expect("loaded above"))),
            _ => routes[i].as_ref().map(Planner::Replay).map_err(|e| Error::InvalidAllocation(e.clone())),
        },
        &config.sim,
    );
    fs::create_dir_all(out)?;
    let hash = config.hash();
    write_json(&out.join("benchmark.json"), &hash, &report)?;
    let mut csv = csv_header(&hash);
    csv.push_str(&report.to_csv());
    fs::write(out.join("benchmark.csv"), csv)?;
    for s in &report.summary {
        let fmt = |x: Option<swarm_infer::sim::Summary>| x.map_or("n/a".to_string(), |s| format!("median {:.1} mean {:.1}", s.median, s.mean));
        println!("{:>6}: {}/{} complete | time {} | distance {}", s.planner, s.completed, s.runs, fmt(s.completion_time), fmt(s.total_distance));
    }
    if report.succeeded() == 0 {
        return Err(CliError::Core(Error::StepCapExceeded(0)));
    }
    Ok(())
}

/// Strips the `# …` provenance line and returns the CSV body.
fn csv_body(text: &str) -> &str {
    match text.strip_prefix('#') {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => text,
    }
}

fn cmd_export_plots(config: &RunConfig, bench: Option<&Path>, run_dir: Option<&Path>, out: &Path) -> CliResult<()> {
    if bench.is_none() && run_dir.is_none() {
        return Err(CliError::Input("give --benchmark and/or --run".into()));
    }
    fs::create_dir_all(out)?;
    let hash = config.hash();
    let mut written = Vec::new();
    if let Some(path) = bench {
        let report: Envelope<BenchmarkReport> = serde_json::from_str(&read_text(path)?)?;
        let mut time = csv_header(&hash);
        time.push_str("planner,scenario,targets,completion_time\n");
        let mut dist = csv_header(&hash);
        dist.push_str("planner,scenario,targets,total_distance\n");
        for c in report.body.cells.iter().filter(|c| c.status == "ok") {
            let m = c.metrics.as_ref().expect("ok cells carry metrics");
            time.push_str(&format!("{},{},{},{}\n", c.planner, c.scenario, m.targets_total, m.completion_time));
            dist.push_str(&format!("{},{},{},{}\n", c.planner, c.scenario, m.targets_total, m.total_distance));
        }
        fs::write(out.join("fig5a_completion_time.csv"), time)?;
        fs::write(out.join("fig5b_distance.csv"), dist)?;
        written.extend(["fig5a_completion_time.csv", "fig5b_distance.csv"]);
    }
    if let Some(dir) = run_dir {
        let metrics: Envelope<MetricsRecord> = serde_json::from_str(&read_text(&dir.join("metrics.json"))?)?;
        let m = metrics.body;
        let trace = read_text(&dir.join("trace.csv"))?;
        let mut traj = csv_header(&hash);
        let mut lines = csv_body(&trace).lines();
        lines.next();
        traj.push_str("planner,t,uav,x,y,vx,vy\n");
        for line in lines {
            traj.push_str(&format!("{},{line}\n", m.planner));
        }
        fs::write(out.join("fig1_fig3_trajectories.csv"), traj)?;
        let scenario = Scenario::from_json(&read_text(&dir.join("scenario.json"))?)?;
        let mut points = csv_header(&hash);
        points.push_str("kind,id,x,y,radius,x_end,y_end\n");
        points.push_str(&format!("depot,0,{},{},,,\n", scenario.instance.depot.x, scenario.instance.depot.y));
        for (i, t) in scenario.instance.targets.iter().enumerate() {
            points.push_str(&format!("target,{i},{},{},,,\n", t.x, t.y));
        }
        for (i, d) in scenario.instance.obstacles.iter().chain(&scenario.obstacles.statics).enumerate() {
            points.push_str(&format!("static_obstacle,{i},{},{},{},,\n", d.center.x, d.center.y, d.radius));
        }
        for (i, d) in scenario.obstacles.dynamics.iter().enumerate() {
            points.push_str(&format!("dynamic_obstacle,{i},{},{},{},{},{}\n", d.start.x, d.start.y, d.radius, d.end.x, d.end.y));
        }
        fs::write(out.join("fig1_fig3_scene.csv"), points)?;
        written.extend(["fig1_fig3_trajectories.csv", "fig1_fig3_scene.csv"]);
        if !m.abnormality.is_empty() {
            let mut abn = csv_header(&hash);
            abn.push_str("t,level,abnormality,replanned\n");
            for r in &m.abnormality {
                let replanned = r.replanned.map_or(String::new(), |l| format!("{l:?}").to_lowercase());
                for (level, v) in [("mission", r.a_msn), ("route", r.a_rte), ("motion", r.a_mot), ("total", r.a_total)] {
                    abn.push_str(&format!("{},{level},{v},{replanned}\n", r.t));
                }
            }
            fs::write(out.join("fig2_abnormality.csv"), abn)?;
            written.push("fig2_abnormality.csv");
        }
    }
    let mut index = BufWriter::new(File::create(out.join("index.txt"))?);
    for w in &written {
        writeln!(index, "{w}")?;
    }
    println!("wrote {}", written.join(", "));
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::GenDemos { out, num } => cmd_gen_demos(&config, out, *num),
        Command::BuildModel { dataset, out, qtable_out } => cmd_build_model(&config, dataset, out, qtable_out.as_deref()),
        Command::Simulate {
            planner,
            scenario,
            model,
            qtable,
            out,
        } => cmd_simulate(&config, *planner, scenario.as_deref(), model.as_deref(), qtable.as_deref(), out),
        Command::Benchmark {
            model,
            qtable,
            out,
            scenarios,
            planners,
            fleet_sizes,
        } => {
            if fleet_sizes.is_empty() {
                return cmd_benchmark(&config, model.as_deref(), qtable.as_deref(), out, *scenarios, planners);
            }
            for &q in fleet_sizes {
                if q == 0 {
                    return Err(CliError::Input("fleet sizes must be positive".into()));
                }
                let mut c = config.clone();
                c.scenario.instance.fleet_size = q;
                println!("fleet size {q}");
                cmd_benchmark(&c, model.as_deref(), qtable.as_deref(), &out.join(format!("q{q}")), *scenarios, planners)?;
            }
            Ok(())
        }
        Command::ExportPlots { benchmark, run, out } => cmd_export_plots(&config, benchmark.as_deref(), run.as_deref(), out),
    }
}

/// Every `--set` in argument order. Clap keeps only the subcommand-level
/// occurrences of a global option when it appears on both sides.
fn collect_overrides(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        } else if a == "--set" {
            out.extend(it.next().cloned());
        } else if let Some(v) = a.strip_prefix("--set=") {
            out.push(v.to_string());
        }
    }
    out
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let mut cli = Cli::parse_from(&args);
    cli.overrides = collect_overrides(&args[1..]);
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
