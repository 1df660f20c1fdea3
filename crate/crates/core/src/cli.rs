//! Command-line surface: graph building and queries, training, evaluation,
//! parameter sweeps and curve export.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{self, RunConfig};
use crate::distances::{compute_apsp, DistanceTable};
use crate::error::Error;
use crate::geometry::Vec3;
use crate::goalgraph::{build_graph, GoalGraph};
use crate::learner::DiscretizedQ;
use crate::trainer::{self, stream_rng, stream_seed, GoalSource, IterationMetrics, MetricsWriter, Mode, Stream, Trainer};

/// Directory used to cache graphs and distance tables between runs.
pub const CACHE_ENV: &str = "HINDSIGHT_ATLAS_CACHE";

pub const RUN_ARTIFACT: &str = "hindsight-atlas/run";
pub const RUN_ARTIFACT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SELECTIONS_FILE: &str = "selections.jsonl";
pub const CHECKPOINT_FILE: &str = "learner.json";
const GRAPH_FILE: &str = "graph.json";
const TABLE_FILE: &str = "distances.bin";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Run(e) => e.exit_code(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Run(e) => e.fmt(f),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hindsight-atlas", version, about = "Graph-based hindsight goal generation on point-mass manipulation tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or query the goal-space graph.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Train one run and write its metrics.
    Train(TrainArgs),
    /// Measure the greedy success rate of a learner checkpoint.
    Evaluate(EvaluateArgs),
    /// Train one run per (value, seed) cell and aggregate success curves.
    Sweep(SweepArgs),
    /// Merge the metrics of several runs into one plot-ready table.
    ExportCurves(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML).
    pub config: PathBuf,
    /// Override a configuration key, e.g. `--set hgg.delta_stop=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum GraphCommand {
    /// Build the graph and its distance table.
    Build(GraphBuildArgs),
    /// Graph distance and shortest path between two goals.
    Query(GraphQueryArgs),
}

#[derive(Debug, Args)]
pub struct GraphBuildArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub n_x: Option<usize>,
    #[arg(long)]
    pub n_y: Option<usize>,
    #[arg(long)]
    pub n_z: Option<usize>,
    /// Output directory; defaults to the cache directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphQueryArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub from: Vec3,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub to: Vec3,
    /// Directory written by `graph build`; built on demand when omitted.
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory written by `graph build`; built on demand when omitted.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Record wall time per iteration (makes metrics files differ run to run).
    #[arg(long)]
    pub timing: bool,
    /// Overwrite an existing run directory.
    #[arg(long)]
    pub force: bool,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the trainer's evaluation episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// Lattice points per axis. Axes with two points (planar tasks) stay flat.
    N,
    /// Hand-off threshold on the fraction of close hindsight goals.
    DeltaStop,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub out: PathBuf,
    /// Cells trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Run directories produced by `train` or `sweep`.
    pub runs: Vec<PathBuf>,
    /// Output file; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_point(s: &str) -> std::result::Result<Vec3, String> {
    let parts: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"))).collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected three finite numbers 'x,y,z', got '{s}'")),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Graph(GraphCommand::Build(a)) => cmd_graph_build(a),
        Command::Graph(GraphCommand::Query(a)) => cmd_graph_query(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ExportCurves(a) => cmd_export_curves(a),
    }
}

fn load_config(cfg: &ConfigArgs) -> CliResult<RunConfig> {
    Ok(config::load(&cfg.config, &cfg.set)?)
}

// ---------------------------------------------------------------- graphs

pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Cache key of the graph a configuration describes.
fn graph_key(config: &RunConfig) -> Result<String, Error> {
    let space = config.env.accessible_space()?;
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&space)?);
    for n in config.graph.counts() {
        h.update((n as u64).to_le_bytes());
    }
    Ok(hex::encode(&h.finalize()[..12]))
}

fn build_table(config: &RunConfig) -> Result<DistanceTable, Error> {
    let [nx, ny, nz] = config.graph.counts();
    let graph = build_graph(&config.env.accessible_space()?, nx, ny, nz)?;
    compute_apsp(Arc::new(graph))
}

fn load_table(dir: &Path) -> Result<DistanceTable, Error> {
    let graph = Arc::new(GoalGraph::load(&dir.join(GRAPH_FILE))?);
    DistanceTable::load(&dir.join(TABLE_FILE), graph)
}

fn save_table(table: &DistanceTable, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    table.graph().save(&dir.join(GRAPH_FILE))?;
    table.save(&dir.join(TABLE_FILE))
}

/// Distance table for `config`: loaded from `dir` when given, otherwise
/// from the cache, otherwise built (and cached when a cache is configured).
pub fn obtain_table(config: &RunConfig, dir: Option<&Path>) -> Result<Arc<DistanceTable>, Error> {
    if let Some(dir) = dir {
        let table = load_table(dir)?;
        let space = config.env.accessible_space()?;
        if table.graph().space() != &space || table.graph().spec().counts != config.graph.counts() {
            return Err(Error::InvalidConfig(format!("graph in {} was built for a different environment or lattice", dir.display())));
        }
        return Ok(Arc::new(table));
    }
    let Some(cache) = cache_dir() else {
        return Ok(Arc::new(build_table(config)?));
    };
    let dir = cache.join(graph_key(config)?);
    if dir.join(TABLE_FILE).exists() {
        if let Ok(table) = load_table(&dir) {
            return Ok(Arc::new(table));
        }
    }
    let table = build_table(config)?;
    save_table(&table, &dir)?;
    Ok(Arc::new(table))
}

fn cmd_graph_build(a: GraphBuildArgs) -> CliResult<()> {
    let mut config = load_config(&a.cfg)?;
    config.graph.n_x = a.n_x.unwrap_or(config.graph.n_x);
    config.graph.n_y = a.n_y.unwrap_or(config.graph.n_y);
    config.graph.n_z = a.n_z.unwrap_or(config.graph.n_z);
    let out = match (a.out, cache_dir()) {
        (Some(out), _) => out,
        (None, Some(cache)) => cache.join(graph_key(&config)?),
        (None, None) => return Err(CliError::Usage(format!("pass --out or set {CACHE_ENV}"))),
    };
    let [nx, ny, nz] = config.graph.counts();
    let t0 = Instant::now();
    let graph = build_graph(&config.env.accessible_space()?, nx, ny, nz)?;
    let graph_time = t0.elapsed().as_secs_f64();
    println!(
        "{} candidates, {} excluded, {} vertices, {} edges ({} pruned as obstacle-crossing)",
        graph.candidate_count(),
        graph.excluded_count(),
        graph.vertex_count(),
        graph.edge_count(),
        graph.pruned_edges()
    );
    let t1 = Instant::now();
    let table = compute_apsp(Arc::new(graph))?;
    let table_time = t1.elapsed().as_secs_f64();
    save_table(&table, &out)?;
    println!("graph built in {graph_time:.3}s, distance table in {table_time:.3}s");
    println!("hash {}", table.graph().hash());
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_graph_query(a: GraphQueryArgs) -> CliResult<()> {
    let config = load_config(&a.cfg)?;
    let table = obtain_table(&config, a.graph.as_deref())?;
    let d = table.graph_distance(&a.from, &a.to);
    let mut text = format!("d_G {d}\neuclidean {}\n", (a.from - a.to).norm());
    let ends = (table.try_vertex(&a.from), table.try_vertex(&a.to));
    if let (Some(u), Some(v)) = ends {
        if let Some(path) = table.shortest_path(u, v) {
            text += &format!("path {} vertices\n", path.len());
            for id in path {
                let p = table.graph().position(id);
                text += &format!("  {:.6},{:.6},{:.6}\n", p.x, p.y, p.z);
            }
        }
    }
    // A closed pipe (`| head`) is not an error worth reporting.
    let _ = std::io::Write::write_all(&mut std::io::stdout().lock(), text.as_bytes());
    Ok(())
}

// ---------------------------------------------------------------- training

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutputs {
    pub metrics: String,
    pub selections: String,
    pub checkpoint: String,
}

/// Written once, before the first iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub artifact_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub mode: Mode,
    pub graph_hash: Option<String>,
    pub config: RunConfig,
    pub outputs: RunOutputs,
}

#[derive(Serialize)]
struct MatchRecord {
    target: Vec3,
    hindsight_goal: Vec3,
    trajectory: u64,
    step: usize,
    cost: f64,
}

/// One line of the selection log.
#[derive(Serialize)]
struct SelectionRecord {
    iteration: usize,
    source: GoalSource,
    close_fraction: Option<f64>,
    total_cost: Option<f64>,
    matched: Vec<MatchRecord>,
    /// Exploration goals actually used this iteration.
    goals: Vec<Vec3>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub graph_dir: Option<PathBuf>,
    pub timing: bool,
    pub force: bool,
    pub quiet: bool,
}

fn prepare_run_dir(out: &Path, force: bool) -> CliResult<()> {
    if out.join(MANIFEST_FILE).exists() {
        if !force {
            return Err(CliError::Usage(format!("{} already holds a run; pass --force to overwrite", out.display())));
        }
        for f in [MANIFEST_FILE, METRICS_FILE, SELECTIONS_FILE, CHECKPOINT_FILE] {
            let p = out.join(f);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

/// Trains one run into `out`. On a failed iteration the learner as of the
/// last completed iteration is checkpointed before the error is returned.
pub fn train(config: &RunConfig, out: &Path, opts: &TrainOptions) -> CliResult<Vec<IterationMetrics>> {
    config.validate()?;
    prepare_run_dir(out, opts.force)?;
    let mode = config.trainer.mode;
    let table = match mode {
        Mode::Her => None,
        Mode::GHgg => Some(obtain_table(config, opts.graph_dir.as_deref())?),
        // Only used for reporting graph distances; skipped when the lattice
        // cannot satisfy the density criterion.
        Mode::Hgg => match obtain_table(config, opts.graph_dir.as_deref()) {
            Ok(t) => Some(t),
            Err(Error::DensityViolation { .. }) => None,
            Err(e) => return Err(e.into()),
        },
    };
    let manifest = RunManifest {
        artifact: RUN_ARTIFACT.into(),
        artifact_version: RUN_ARTIFACT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: config.trainer.seed,
        mode,
        graph_hash: table.as_ref().map(|t| t.graph().hash().to_string()),
        config: config.clone(),
        outputs: RunOutputs { metrics: METRICS_FILE.into(), selections: SELECTIONS_FILE.into(), checkpoint: CHECKPOINT_FILE.into() },
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest).map_err(Error::from)?)?;

    let learner = DiscretizedQ::new(config.learner, stream_seed(config.trainer.seed, Stream::Learner))?;
    let mut trainer = Trainer::new(config.env.clone(), config.trainer, config.hgg, learner, table)?;
    let mut metrics = MetricsWriter::new(BufWriter::new(File::create(out.join(METRICS_FILE))?), opts.timing)?;
    let mut selections = BufWriter::new(File::create(out.join(SELECTIONS_FILE))?);
    let checkpoint = out.join(CHECKPOINT_FILE);
    let mut history = Vec::with_capacity(config.trainer.iterations);

    for _ in 0..config.trainer.iterations {
        let report = match trainer.run_iteration() {
            Ok(r) => r,
            Err(e) => {
                trainer.learner().save(&checkpoint)?;
                return Err(e.into());
            }
        };
        let m = report.metrics;
        metrics.write(&m)?;
        let record = SelectionRecord {
            iteration: m.iteration,
            source: report.source,
            close_fraction: report.close_fraction,
            total_cost: report.selection.as_ref().map(|s| s.total_cost),
            matched: report
                .selection
                .iter()
                .flat_map(|s| &s.matched)
                .map(|p| MatchRecord {
                    target: p.target.goal,
                    hindsight_goal: p.hindsight_goal,
                    trajectory: p.trajectory,
                    step: p.step,
                    cost: p.cost,
                })
                .collect(),
            goals: report.tasks.iter().map(|t| t.goal).collect(),
        };
        serde_json::to_writer(&mut selections, &record).map_err(Error::from)?;
        selections.write_all(b"\n")?;
        if !opts.quiet && (m.iteration % 10 == 0 || m.iteration == 1) {
            eprintln!(
                "[{} seed {}] iteration {:>4}  success {:.2}  source {:?}{}",
                mode,
                config.trainer.seed,
                m.iteration,
                m.success_rate,
                report.source,
                m.mean_dg_to_target.map(|d| format!("  d_G {d:.3}")).unwrap_or_default()
            );
        }
        history.push(m);
    }
    selections.flush()?;
    trainer.learner().save(&checkpoint)?;
    Ok(history)
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut config = load_config(&a.cfg)?;
    if let Some(mode) = a.mode {
        config.trainer.mode = mode;
    }
    if let Some(seed) = a.seed {
        config.trainer.seed = seed;
    }
    let opts = TrainOptions { graph_dir: a.graph, timing: a.timing, force: a.force, quiet: a.quiet };
    let history = train(&config, &a.out, &opts)?;
    if let Some(last) = history.last() {
        println!("final success {:.3} after {} iterations; wrote {}", last.success_rate, last.iteration, a.out.display());
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult<()> {
    let config = load_config(&a.cfg)?;
    let learner = DiscretizedQ::load(&a.checkpoint)?;
    let episodes = a.episodes.unwrap_or(config.trainer.eval_episodes);
    if episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let mut rng = stream_rng(a.seed, Stream::Eval);
    let rate = trainer::evaluate(&learner, &config.env, episodes, &mut rng)?;
    println!("success_rate {rate}");
    println!("episodes {episodes}");
    Ok(())
}

// ---------------------------------------------------------------- sweeps

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and interquartile range of `values`.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile(&v, 0.5), quantile(&v, 0.25), quantile(&v, 0.75))
}

fn apply_sweep_value(config: &mut RunConfig, param: SweepParam, raw: &str) -> CliResult<()> {
    match param {
        SweepParam::N => {
            let n: usize = raw.parse().map_err(|_| CliError::Usage(format!("lattice size '{raw}' is not a positive integer")))?;
            let flat_z = config.graph.n_z == 2;
            config.graph.n_x = n;
            config.graph.n_y = n;
            if !flat_z {
                config.graph.n_z = n;
            }
        }
        SweepParam::DeltaStop => {
            config.hgg.delta_stop = raw.parse().map_err(|_| CliError::Usage(format!("delta_stop '{raw}' is not a number")))?;
        }
    }
    Ok(())
}

struct Cell {
    value: String,
    seed: u64,
    dir: PathBuf,
    outcome: std::result::Result<Vec<IterationMetrics>, String>,
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let values: Vec<String> = a.values.iter().map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    if a.seeds.is_empty() {
        return Err(CliError::Usage("--seeds needs at least one seed".into()));
    }
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut base = load_config(&a.cfg)?;
    if let Some(mode) = a.mode {
        base.trainer.mode = mode;
    }
    let param_name = match a.param {
        SweepParam::N => "n",
        SweepParam::DeltaStop => "delta_stop",
    };
    let mut jobs = Vec::new();
    for v in &values {
        let mut config = base.clone();
        apply_sweep_value(&mut config, a.param, v)?;
        for &seed in &a.seeds {
            let mut config = config.clone();
            config.trainer.seed = seed;
            let dir = a.out.join("cells").join(format!("{param_name}={v}")).join(format!("seed={seed}"));
            jobs.push((v.clone(), seed, dir, config));
        }
    }
    fs::create_dir_all(&a.out)?;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build().map_err(|e| CliError::Run(Error::InvalidConfig(e.to_string())))?;
    let opts = TrainOptions { force: a.force, quiet: true, ..TrainOptions::default() };
    let cells: Vec<Cell> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(value, seed, dir, config)| {
                let outcome = train(&config, &dir, &opts).map_err(|e| e.to_string());
                match &outcome {
                    Ok(h) => eprintln!("{param_name}={value} seed={seed}: final success {:.2}", h.last().map_or(0.0, |m| m.success_rate)),
                    Err(e) => eprintln!("{param_name}={value} seed={seed}: failed: {e}"),
                }
                Cell { value, seed, dir, outcome }
            })
            .collect()
    });

    let mut w = csv::Writer::from_path(a.out.join("cells.csv")).map_err(Error::from)?;
    w.write_record(["param", "value", "seed", "status", "iterations", "final_success", "best_success", "run_dir", "error"])
        .map_err(Error::from)?;
    for c in &cells {
        let (status, iters, last, best, err) = match &c.outcome {
            Ok(h) => (
                "ok",
                h.len().to_string(),
                h.last().map(|m| m.success_rate.to_string()).unwrap_or_default(),
                h.iter()
                    .map(|m| m.success_rate)
                    .fold(None, |b: Option<f64>, s| Some(b.map_or(s, |b| b.max(s))))
                    .map(|s| s.to_string())
                    .unwrap_or_default(),
                String::new(),
            ),
            Err(e) => ("failed", String::new(), String::new(), String::new(), e.clone()),
        };
        w.write_record([param_name, &c.value, &c.seed.to_string(), status, &iters, &last, &best, &c.dir.display().to_string(), &err])
            .map_err(Error::from)?;
    }
    w.flush()?;

    let mut agg = csv::Writer::from_path(a.out.join("aggregate.csv")).map_err(Error::from)?;
    agg.write_record(["param", "value", "iteration", "runs", "median", "q1", "q3"]).map_err(Error::from)?;
    for v in &values {
        let runs: Vec<&Vec<IterationMetrics>> = cells.iter().filter(|c| &c.value == v).filter_map(|c| c.outcome.as_ref().ok()).collect();
        let len = runs.iter().map(|h| h.len()).max().unwrap_or(0);
        for i in 0..len {
            let s: Vec<f64> = runs.iter().filter_map(|h| h.get(i)).map(|m| m.success_rate).collect();
            let (med, q1, q3) = quartiles(&s);
            agg.write_record([
                param_name,
                v,
                &(i + 1).to_string(),
                &s.len().to_string(),
                &med.to_string(),
                &q1.to_string(),
                &q3.to_string(),
            ])
            .map_err(Error::from)?;
        }
    }
    agg.flush()?;
    let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
    println!("{} cells, {} failed; wrote {}", cells.len(), failed, a.out.display());
    Ok(())
}

// ---------------------------------------------------------------- export

/// One run's success curve as read back from disk.
#[derive(Debug, Clone)]
pub struct RunCurve {
    pub run: String,
    pub mode: String,
    pub seed: u64,
    pub success: Vec<(usize, f64)>,
}

#[derive(Deserialize)]
struct ManifestHead {
    mode: String,
    seed: u64,
}

/// Reads the manifest and metrics of a run directory.
pub fn read_run(dir: &Path) -> std::result::Result<RunCurve, String> {
    let manifest = fs::read(dir.join(MANIFEST_FILE)).map_err(|e| format!("manifest: {e}"))?;
    let head: ManifestHead = serde_json::from_slice(&manifest).map_err(|e| format!("manifest: {e}"))?;
    let mut r = csv::Reader::from_path(dir.join(METRICS_FILE)).map_err(|e| format!("metrics: {e}"))?;
    let header = r.headers().map_err(|e| format!("metrics: {e}"))?.clone();
    if header.iter().ne(trainer::METRICS_HEADER) {
        return Err("metrics: unexpected header".into());
    }
    let mut success = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| format!("metrics: {e}"))?;
        let it = row[0].parse().map_err(|_| format!("metrics: bad iteration '{}'", &row[0]))?;
        let s: f64 = row[1].parse().map_err(|_| format!("metrics: bad success rate '{}'", &row[1]))?;
        success.push((it, s));
    }
    if success.is_empty() {
        return Err("metrics: no rows".into());
    }
    let run = dir
        .canonicalize()
        .ok()
        .and_then(|p| {
            let parent = p.parent()?.file_name()?.to_string_lossy().into_owned();
            let name = p.file_name()?.to_string_lossy().into_owned();
            Some(if name.starts_with("seed=") { format!("{parent}/{name}") } else { name })
        })
        .unwrap_or_else(|| dir.display().to_string());
    Ok(RunCurve { run, mode: head.mode, seed: head.seed, success })
}

#[derive(Serialize)]
struct CurveRow<'a> {
    run: &'a str,
    mode: &'a str,
    seed: u64,
    iteration: usize,
    success_rate: f64,
    mode_median: f64,
    mode_q1: f64,
    mode_q3: f64,
}

fn cmd_export_curves(a: ExportArgs) -> CliResult<()> {
    let mut curves = Vec::new();
    for dir in &a.runs {
        match read_run(dir) {
            Ok(c) => curves.push(c),
            Err(e) => eprintln!("warning: skipping {}: {e}", dir.display()),
        }
    }
    if curves.is_empty() {
        return Err(CliError::Usage("no valid run directories to export".into()));
    }
    let mut rows = Vec::new();
    for c in &curves {
        for &(iteration, success_rate) in &c.success {
            let peers: Vec<f64> = curves
                .iter()
                .filter(|o| o.mode == c.mode)
                .filter_map(|o| o.success.iter().find(|(i, _)| *i == iteration).map(|p| p.1))
                .collect();
            let (mode_median, mode_q1, mode_q3) = quartiles(&peers);
            rows.push(CurveRow { run: &c.run, mode: &c.mode, seed: c.seed, iteration, success_rate, mode_median, mode_q1, mode_q3 });
        }
    }
    if a.out.extension().is_some_and(|e| e == "json") {
        fs::write(&a.out, serde_json::to_vec_pretty(&rows).map_err(Error::from)?)?;
    } else {
        let mut w = csv::Writer::from_path(&a.out).map_err(Error::from)?;
        for r in &rows {
            w.serialize(r).map_err(Error::from)?;
        }
        w.flush()?;
    }
    println!("{} runs, {} rows; wrote {}", curves.len(), rows.len(), a.out.display());
    Ok(())
}
