//! Hindsight goal generation.
//!
//! Each sampled target task `(ŝ0, ĝ)` is matched to a distinct buffer
//! trajectory minimizing
//!
//! ```text
//! w = c·‖m(ŝ0) − m(s0)‖ + min_t ( d(ĝ, m(s_t)) − V(s0 ‖ m(s_t)) / L )
//! ```
//!
//! where `d` is either the obstacle-aware graph distance or the plain
//! euclidean distance. The achieved goal at the minimizing step becomes the
//! intermediate exploration goal for that task.

pub mod hungarian;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::DistanceTable;
use crate::env::{abstraction_m, EnvState};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::goalgraph::VertexId;
use crate::learner::Learner;
use crate::replay::Trajectory;

/// Finite stand-in for infinite costs inside the assignment solver.
pub const INFEASIBLE_SENTINEL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    Graph,
    Euclidean,
}

/// Distance used inside the trajectory cost.
#[derive(Clone, Copy)]
pub enum Metric<'a> {
    Graph(&'a DistanceTable),
    Euclidean,
}

impl Metric<'_> {
    pub fn mode(&self) -> MetricMode {
        match self {
            Metric::Graph(_) => MetricMode::Graph,
            Metric::Euclidean => MetricMode::Euclidean,
        }
    }

    pub fn distance(&self, a: &Vec3, b: &Vec3) -> f64 {
        match self {
            Metric::Graph(t) => t.graph_distance(a, b),
            Metric::Euclidean => (a - b).norm(),
        }
    }
}

fn default_c() -> f64 {
    3.0
}
fn default_lipschitz() -> f64 {
    5.0
}
fn default_k() -> usize {
    50
}
fn default_m() -> usize {
    50
}
fn default_delta_stop() -> f64 {
    0.9
}
fn default_pool() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HggParams {
    /// Weight of the initial-state distance.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Lipschitz constant scaling the value term.
    #[serde(default = "default_lipschitz")]
    pub lipschitz: f64,
    /// Target tasks sampled per iteration.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Intermediate tasks (exploration episodes) per iteration.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Fraction of close hindsight goals that ends goal generation.
    #[serde(default = "default_delta_stop")]
    pub delta_stop: f64,
    /// Closeness radius for the stop test; the environment's success
    /// threshold when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_close: Option<f64>,
    /// Number of most recent buffer trajectories considered for matching.
    #[serde(default = "default_pool")]
    pub pool: usize,
}

impl Default for HggParams {
    fn default() -> Self {
        Self {
            c: default_c(),
            lipschitz: default_lipschitz(),
            k: default_k(),
            m: default_m(),
            delta_stop: default_delta_stop(),
            eps_close: None,
            pool: default_pool(),
        }
    }
}

impl HggParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("hgg: {m}")));
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad("c must be a non-negative number");
        }
        if !(self.lipschitz > 0.0) {
            return bad("lipschitz must be positive");
        }
        if self.k == 0 || self.m == 0 {
            return bad("k and m must be positive");
        }
        if !(0.0..=1.0).contains(&self.delta_stop) {
            return bad("delta_stop must lie in [0, 1]");
        }
        if self.eps_close.is_some_and(|e| !(e >= 0.0)) {
            return bad("eps_close must be non-negative");
        }
        if self.pool < self.k {
            return bad("pool must hold at least k trajectories");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskPair {
    pub s0: EnvState,
    pub goal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub target: TaskPair,
    pub trajectory: u64,
    pub step: usize,
    pub hindsight_goal: Vec3,
    pub cost: f64,
}

impl MatchedPair {
    /// The intermediate exploration task: the target's initial state with
    /// the hindsight goal.
    pub fn task(&self) -> TaskPair {
        TaskPair { s0: self.target.s0, goal: self.hindsight_goal }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSelection {
    pub metric: MetricMode,
    pub matched: Vec<MatchedPair>,
    pub total_cost: f64,
}

/// Per-trajectory quantities independent of the target task.
struct Prepared {
    start: Vec3,
    vertices: Vec<Option<VertexId>>,
    achieved: Vec<Vec3>,
    value_terms: Vec<f64>,
}

fn prepare(traj: &Trajectory, learner: &dyn Learner, hp: &HggParams, metric: Metric<'_>) -> Prepared {
    let s0 = traj.initial_state();
    let vertices = match metric {
        Metric::Graph(t) => traj.achieved.iter().map(|g| t.try_vertex(g)).collect(),
        Metric::Euclidean => Vec::new(),
    };
    Prepared {
        start: abstraction_m(s0),
        vertices,
        achieved: traj.achieved.clone(),
        value_terms: traj.achieved.iter().map(|g| learner.value(s0, g) / hp.lipschitz).collect(),
    }
}

fn prepared_cost(
    task: &TaskPair,
    target_vertex: Option<VertexId>,
    p: &Prepared,
    hp: &HggParams,
    metric: Metric<'_>,
) -> Result<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for t in 0..p.achieved.len() {
        let d = match metric {
            Metric::Graph(table) => match (target_vertex, p.vertices[t]) {
                (Some(a), Some(b)) => table.vertex_distance(a, b),
                _ => f64::INFINITY,
            },
            Metric::Euclidean => (task.goal - p.achieved[t]).norm(),
        };
        if !d.is_finite() {
            continue;
        }
        let term = d - p.value_terms[t];
        if best.is_none_or(|(b, _)| term < b) {
            best = Some((term, t));
        }
    }
    let (term, t) = best.ok_or(Error::AllInfinite)?;
    Ok((hp.c * (abstraction_m(&task.s0) - p.start).norm() + term, t))
}

/// Cost of guiding `task` with `traj` and the step attaining it.
pub fn trajectory_cost(
    task: &TaskPair,
    traj: &Trajectory,
    learner: &dyn Learner,
    hp: &HggParams,
    metric: Metric<'_>,
) -> Result<(f64, usize)> {
    let p = prepare(traj, learner, hp, metric);
    let target_vertex = match metric {
        Metric::Graph(t) => {
            t.record_queries(p.achieved.len() as u64);
            t.try_vertex(&task.goal)
        }
        Metric::Euclidean => None,
    };
    prepared_cost(task, target_vertex, &p, hp, metric)
}

/// Assigns each target a distinct trajectory from `pool`, minimizing the
/// summed cost.
pub fn select_trajectories(
    targets: &[TaskPair],
    pool: &[(u64, &Trajectory)],
    learner: &dyn Learner,
    hp: &HggParams,
    metric: Metric<'_>,
) -> Result<GoalSelection> {
    let (rows, cols) = (targets.len(), pool.len());
    if cols < rows {
        return Err(Error::InsufficientTrajectories { needed: rows, available: cols });
    }
    let prepared: Vec<Prepared> = pool.par_iter().map(|(_, t)| prepare(t, learner, hp, metric)).collect();
    let target_vertices: Vec<Option<VertexId>> = match metric {
        Metric::Graph(table) => {
            let steps: usize = prepared.iter().map(|p| p.achieved.len()).sum();
            table.record_queries((steps * rows) as u64);
            targets.iter().map(|t| table.try_vertex(&t.goal)).collect()
        }
        Metric::Euclidean => vec![None; rows],
    };
    let cells: Vec<(f64, usize)> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / cols, idx % cols);
            prepared_cost(&targets[i], target_vertices[i], &prepared[j], hp, metric).unwrap_or((f64::INFINITY, 0))
        })
        .collect();
    let costs: Vec<f64> = cells.iter().map(|&(c, _)| if c.is_finite() { c } else { INFEASIBLE_SENTINEL }).collect();
    let assignment = hungarian::solve(&costs, rows, cols);
    let mut matched = Vec::with_capacity(rows);
    for (i, &j) in assignment.iter().enumerate() {
        let (cost, step) = cells[i * cols + j];
        if !cost.is_finite() {
            return Err(Error::Infeasible);
        }
        matched.push(MatchedPair { target: targets[i], trajectory: pool[j].0, step, hindsight_goal: pool[j].1.achieved[step], cost });
    }
    let total_cost = matched.iter().map(|m| m.cost).sum();
    Ok(GoalSelection { metric: metric.mode(), matched, total_cost })
}

/// Fraction of hindsight goals within `eps_close` (euclidean) of their
/// target.
pub fn close_fraction(selection: &GoalSelection, eps_close: f64) -> f64 {
    if selection.matched.is_empty() {
        return 0.0;
    }
    let close = selection.matched.iter().filter(|m| (m.hindsight_goal - m.target.goal).norm() <= eps_close).count();
    close as f64 / selection.matched.len() as f64
}

/// Whether goal generation should hand off to plain target-goal
/// exploration.
pub fn stop_condition(selection: &GoalSelection, delta_stop: f64, eps_close: f64) -> bool {
    close_fraction(selection, eps_close) >= delta_stop
}

/// Draws `m` intermediate tasks uniformly, with replacement, from the
/// matched pairs.
pub fn intermediate_tasks<R: Rng + ?Sized>(selection: &GoalSelection, m: usize, rng: &mut R) -> Vec<TaskPair> {
    let k = selection.matched.len();
    (0..m).map(|_| selection.matched[rng.random_range(0..k)].task()).collect()
}
