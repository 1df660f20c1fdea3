//! Training loop: intermediate task construction, exploration, hindsight
//! storage, optimization, hand-off to target goals and evaluation.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::DistanceTable;
use crate::env::{self, EnvConfig};
use crate::error::{Error, Result};
use crate::goalgen::{self, GoalSelection, HggParams, Metric, TaskPair};
use crate::learner::Learner;
use crate::replay::{ReplayBuffer, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    #[serde(rename = "g-hgg")]
    GHgg,
    #[serde(rename = "hgg")]
    Hgg,
    #[serde(rename = "her")]
    Her,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::GHgg, Mode::Hgg, Mode::Her];

    pub fn name(self) -> &'static str {
        match self {
            Mode::GHgg => "g-hgg",
            Mode::Hgg => "hgg",
            Mode::Her => "her",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown mode '{s}' (expected g-hgg, hgg or her)"))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_iterations() -> usize {
    300
}
fn default_steps() -> usize {
    40
}
fn default_batch() -> usize {
    128
}
fn default_eval() -> usize {
    50
}
fn default_capacity() -> usize {
    5000
}
fn default_k_future() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Optimization steps per iteration.
    #[serde(default = "default_steps")]
    pub optimization_steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_eval")]
    pub eval_episodes: usize,
    /// Replay capacity in trajectories.
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_k_future")]
    pub k_future: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            optimization_steps: default_steps(),
            batch_size: default_batch(),
            eval_episodes: default_eval(),
            buffer_capacity: default_capacity(),
            k_future: default_k_future(),
            seed: 0,
            mode: Mode::GHgg,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_episodes == 0 || self.buffer_capacity == 0 {
            return Err(Error::InvalidConfig("trainer: batch_size, eval_episodes and buffer_capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Random streams derived from the run seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Env = 1,
    Eval = 2,
    Replay = 3,
    Learner = 4,
    GoalGen = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for a component that owns its own generator.
pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    use rand::RngCore;
    stream_rng(seed, stream).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub success_rate: f64,
    pub mean_dg_to_target: Option<f64>,
    pub mean_euclid_to_target: Option<f64>,
    pub stopped: bool,
    pub seconds: f64,
}

/// Where an iteration's exploration goals came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalSource {
    /// Target tasks because the buffer cannot support a matching yet.
    Bootstrap,
    /// Hindsight goals from the matching.
    Hindsight,
    /// Target tasks after the hand-off.
    Stopped,
    /// Target tasks, plain hindsight replay.
    Targets,
}

impl GoalSource {
    pub fn uses_targets(self) -> bool {
        self != GoalSource::Hindsight
    }
}

#[derive(Debug, Clone)]
pub struct IterationReport {
    pub metrics: IterationMetrics,
    pub source: GoalSource,
    /// Matching computed this iteration, if any.
    pub selection: Option<GoalSelection>,
    /// Fraction of matched hindsight goals close to their targets.
    pub close_fraction: Option<f64>,
    pub tasks: Vec<TaskPair>,
}

/// Runs one episode from `task`. Returns the trajectory and whether it
/// ended in success.
pub fn rollout<F>(config: &EnvConfig, task: &TaskPair, mut policy: F) -> Result<(Trajectory, bool)>
where
    F: FnMut(&env::EnvState) -> env::Action,
{
    let mut state = task.s0;
    state.step_count = 0;
    state.done = false;
    let mut traj = Trajectory::new(state, task.goal);
    let mut success = false;
    while !state.done {
        let action = policy(&state);
        let out = env::step(config, &state, &task.goal, &action)?;
        traj.push(action, out.state);
        success = out.reward == 0.0;
        state = out.state;
    }
    Ok((traj, success))
}

/// Fraction of greedy rollouts on `tasks` that reach their goal.
pub fn evaluate_tasks<L: Learner + ?Sized>(learner: &L, config: &EnvConfig, tasks: &[TaskPair]) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let results: Vec<bool> =
        tasks.par_iter().map(|t| rollout(config, t, |s| learner.greedy(s, &t.goal)).map(|r| r.1)).collect::<Result<_>>()?;
    Ok(results.iter().filter(|&&s| s).count() as f64 / tasks.len() as f64)
}

/// Greedy success rate over `episodes` freshly sampled target tasks.
pub fn evaluate<L: Learner + ?Sized>(learner: &L, config: &EnvConfig, episodes: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let tasks: Vec<TaskPair> = (0..episodes).map(|_| sample_target(config, rng)).collect();
    evaluate_tasks(learner, config, &tasks)
}

pub fn sample_target(config: &EnvConfig, rng: &mut ChaCha8Rng) -> TaskPair {
    let (s0, goal) = env::reset(config, rng);
    TaskPair { s0, goal }
}

pub struct Trainer<L: Learner> {
    env: EnvConfig,
    config: TrainConfig,
    hgg: HggParams,
    table: Option<Arc<DistanceTable>>,
    learner: L,
    buffer: ReplayBuffer,
    env_rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    goal_rng: ChaCha8Rng,
    iteration: usize,
    stopped: bool,
}

impl<L: Learner> Trainer<L> {
    /// `table` is required for graph mode; in euclidean mode it only feeds
    /// the reported distances, and plain hindsight replay never reads it.
    pub fn new(env: EnvConfig, config: TrainConfig, hgg: HggParams, learner: L, table: Option<Arc<DistanceTable>>) -> Result<Self> {
        env.validate()?;
        config.validate()?;
        hgg.validate()?;
        if config.mode == Mode::GHgg && table.is_none() {
            return Err(Error::InvalidConfig("graph mode needs a distance table".into()));
        }
        let buffer =
            ReplayBuffer::new(config.buffer_capacity, config.k_future, env.success_threshold, stream_seed(config.seed, Stream::Replay))?;
        Ok(Self {
            env_rng: stream_rng(config.seed, Stream::Env),
            eval_rng: stream_rng(config.seed, Stream::Eval),
            goal_rng: stream_rng(config.seed, Stream::GoalGen),
            env,
            config,
            hgg,
            table,
            learner,
            buffer,
            iteration: 0,
            stopped: false,
        })
    }

    pub fn learner(&self) -> &L {
        &self.learner
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn eps_close(&self) -> f64 {
        self.hgg.eps_close.unwrap_or(self.env.success_threshold)
    }

    fn target_tasks(&mut self, n: usize) -> Vec<TaskPair> {
        (0..n).map(|_| sample_target(&self.env, &mut self.env_rng)).collect()
    }

    fn choose_tasks(&mut self) -> Result<(GoalSource, Option<GoalSelection>, Option<f64>, Vec<TaskPair>)> {
        let m = self.hgg.m;
        if self.config.mode == Mode::Her {
            return Ok((GoalSource::Targets, None, None, self.target_tasks(m)));
        }
        if self.stopped {
            return Ok((GoalSource::Stopped, None, None, self.target_tasks(m)));
        }
        if self.buffer.len() < self.hgg.k {
            return Ok((GoalSource::Bootstrap, None, None, self.target_tasks(m)));
        }
        let targets = self.target_tasks(self.hgg.k);
        let pool = self.buffer.recent(self.hgg.pool);
        let metric = match self.config.mode {
            Mode::GHgg => Metric::Graph(self.table.as_deref().expect("checked at construction")),
            _ => Metric::Euclidean,
        };
        let selection = goalgen::select_trajectories(&targets, &pool, &self.learner, &self.hgg, metric)?;
        let close = goalgen::close_fraction(&selection, self.eps_close());
        if close >= self.hgg.delta_stop {
            self.stopped = true;
            return Ok((GoalSource::Stopped, Some(selection), Some(close), self.target_tasks(m)));
        }
        let tasks = goalgen::intermediate_tasks(&selection, m, &mut self.goal_rng);
        Ok((GoalSource::Hindsight, Some(selection), Some(close), tasks))
    }

    fn distance_summary(&self, selection: &GoalSelection) -> (Option<f64>, Option<f64>) {
        let n = selection.matched.len() as f64;
        let euclid = selection.matched.iter().map(|p| (p.hindsight_goal - p.target.goal).norm()).sum::<f64>() / n;
        let dg = self
            .table
            .as_ref()
            .filter(|_| self.config.mode != Mode::Her)
            .map(|t| selection.matched.iter().map(|p| t.graph_distance(&p.hindsight_goal, &p.target.goal)).sum::<f64>() / n);
        (dg, Some(euclid))
    }

    pub fn run_iteration(&mut self) -> Result<IterationReport> {
        let start = Instant::now();
        self.iteration += 1;
        let (source, selection, close_fraction, tasks) = self.choose_tasks()?;

        for task in &tasks {
            let learner = &mut self.learner;
            let (traj, _) = rollout(&self.env, task, |s| learner.act(s, &task.goal, true))?;
            self.buffer.push(traj);
        }
        for _ in 0..self.config.optimization_steps {
            let batch = self.buffer.sample_minibatch(self.config.batch_size)?;
            self.learner.update(&batch);
        }
        let success_rate = evaluate(&self.learner, &self.env, self.config.eval_episodes, &mut self.eval_rng)?;

        let (mean_dg_to_target, mean_euclid_to_target) = match &selection {
            Some(sel) => self.distance_summary(sel),
            None => (None, None),
        };
        let metrics = IterationMetrics {
            iteration: self.iteration,
            success_rate,
            mean_dg_to_target,
            mean_euclid_to_target,
            stopped: self.stopped,
            seconds: start.elapsed().as_secs_f64(),
        };
        Ok(IterationReport { metrics, source, selection, close_fraction, tasks })
    }

    pub fn into_learner(self) -> L {
        self.learner
    }
}

/// Streams per-iteration metrics as CSV. Wall time is left blank unless
/// `timing` is set, so that repeated runs produce identical files.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
    timing: bool,
}

pub const METRICS_HEADER: [&str; 6] = ["iteration", "success_rate", "mean_dG_to_target", "mean_euclid_to_target", "stopped", "seconds"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(writer: W, timing: bool) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(METRICS_HEADER)?;
        inner.flush()?;
        Ok(Self { inner, timing })
    }

    pub fn write(&mut self, m: &IterationMetrics) -> Result<()> {
        self.inner.write_record([
            m.iteration.to_string(),
            m.success_rate.to_string(),
            fmt_opt(m.mean_dg_to_target),
            fmt_opt(m.mean_euclid_to_target),
            m.stopped.to_string(),
            if self.timing { format!("{:.3}", m.seconds) } else { String::new() },
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}
