//! Goal-conditioned learners.
//!
//! [`Learner`] is the contract the trainer and the goal generator rely on.
//! [`DiscretizedQ`] implements it with a tabular Q function over grid cells
//! of the agent position, object position, grip flag and goal.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvState};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::replay::Transition;

const CHECKPOINT_KIND: &str = "hindsight-atlas/discretized-q";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_abs_td: f64,
    pub transitions: usize,
}

pub trait Learner: Send + Sync {
    /// Action for `state` pursuing `goal`, with exploration noise when
    /// `explore` is set.
    fn act(&mut self, state: &EnvState, goal: &Vec3, explore: bool) -> Action;

    /// Noise-free action. Must agree with `act(.., false)`.
    fn greedy(&self, state: &EnvState, goal: &Vec3) -> Action;

    /// Estimated return of pursuing `goal` from `s0`.
    fn value(&self, s0: &EnvState, goal: &Vec3) -> f64;

    /// One optimization step on a minibatch.
    fn update(&mut self, batch: &[Transition]) -> UpdateStats;
}

pub const N_ACTIONS: usize = 8;
pub const GRIP_ACTION: usize = 6;
pub const NOOP_ACTION: usize = 7;

/// Continuous command of discrete action `a`: 0..6 are unit moves along
/// +x, -x, +y, -y, +z, -z, then grip toggle and no-op.
pub fn action_of(a: usize) -> Action {
    let mut movement = Vec3::zeros();
    let mut grip = -1.0;
    match a {
        0..=5 => movement[a / 2] = if a.is_multiple_of(2) { 1.0 } else { -1.0 },
        GRIP_ACTION => grip = 1.0,
        NOOP_ACTION => {}
        _ => panic!("discrete action {a} out of range"),
    }
    Action { movement, grip }
}

/// Discrete action closest to a continuous command: grip when the grip
/// command is positive, else the dominant axis move if it exceeds half
/// scale, else no-op.
pub fn discretize_action(action: &Action) -> usize {
    if action.grip > 0.0 {
        return GRIP_ACTION;
    }
    let m = &action.movement;
    let axis = (0..3).fold(0, |best, i| if m[i].abs() > m[best].abs() { i } else { best });
    if m[axis].abs() > 0.5 {
        2 * axis + usize::from(m[axis] < 0.0)
    } else {
        NOOP_ACTION
    }
}

fn default_cell_size() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.98
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_epsilon() -> f64 {
    0.2
}
fn default_jitter() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QConfig {
    /// Grid resolution for positions and goals (meters).
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Probability of a uniformly random action when exploring.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Half-width of the uniform noise added to move commands when
    /// exploring, in action units (1.0 is a full-scale step).
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            cell_size: default_cell_size(),
            gamma: default_gamma(),
            learning_rate: default_learning_rate(),
            epsilon: default_epsilon(),
            jitter: default_jitter(),
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("learner: {m}")));
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return bad("cell_size must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.jitter >= 0.0) {
            return bad("jitter must be non-negative");
        }
        Ok(())
    }
}

type Cell = [i32; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QKey {
    agent: Cell,
    object: Cell,
    holding: bool,
    goal: Cell,
}

#[derive(Debug, Clone)]
pub struct DiscretizedQ {
    config: QConfig,
    table: FxHashMap<QKey, [f64; N_ACTIONS]>,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    kind: String,
    version: u32,
    config: QConfig,
    rng: ChaCha8Rng,
    table: Vec<(QKey, [f64; N_ACTIONS])>,
}

fn argmax(q: &[f64; N_ACTIONS]) -> usize {
    (1..N_ACTIONS).fold(0, |best, a| if q[a] > q[best] { a } else { best })
}

impl DiscretizedQ {
    pub fn new(config: QConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, table: FxHashMap::default(), rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn config(&self) -> &QConfig {
        &self.config
    }

    /// Number of (state, goal) cells with at least one learned entry.
    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    fn cell(&self, p: &Vec3) -> Cell {
        let c = self.config.cell_size;
        [(p.x / c).floor() as i32, (p.y / c).floor() as i32, (p.z / c).floor() as i32]
    }

    pub fn key(&self, state: &EnvState, goal: &Vec3) -> QKey {
        QKey { agent: self.cell(&state.agent_pos), object: self.cell(&state.object_pos), holding: state.holding, goal: self.cell(goal) }
    }

    /// Q values of every discrete action; zeros for unseen cells.
    pub fn q_values(&self, state: &EnvState, goal: &Vec3) -> [f64; N_ACTIONS] {
        self.table.get(&self.key(state, goal)).copied().unwrap_or([0.0; N_ACTIONS])
    }

    pub fn set_q(&mut self, state: &EnvState, goal: &Vec3, action: usize, q: f64) {
        let key = self.key(state, goal);
        self.table.entry(key).or_insert([0.0; N_ACTIONS])[action] = q;
    }

    /// Index of the greedy action; ties go to the lowest index.
    pub fn greedy_index(&self, state: &EnvState, goal: &Vec3) -> usize {
        argmax(&self.q_values(state, goal))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut table: Vec<_> = self.table.iter().map(|(k, v)| (*k, *v)).collect();
        table.sort_by_key(|a| a.0);
        let ck =
            Checkpoint { kind: CHECKPOINT_KIND.into(), version: CHECKPOINT_VERSION, config: self.config, rng: self.rng.clone(), table };
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &ck)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ck: Checkpoint = serde_json::from_reader(file)?;
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Malformed { path: path.into(), reason: format!("not a learner checkpoint ({})", ck.kind) });
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Version { kind: "learner checkpoint", found: ck.version, expected: CHECKPOINT_VERSION });
        }
        ck.config.validate()?;
        Ok(Self { config: ck.config, table: ck.table.into_iter().collect(), rng: ck.rng })
    }
}

impl Learner for DiscretizedQ {
    fn act(&mut self, state: &EnvState, goal: &Vec3, explore: bool) -> Action {
        if !explore {
            return self.greedy(state, goal);
        }
        let a = if self.rng.random::<f64>() < self.config.epsilon {
            self.rng.random_range(0..N_ACTIONS)
        } else {
            self.greedy_index(state, goal)
        };
        let mut action = action_of(a);
        let j = self.config.jitter;
        if j > 0.0 {
            for i in 0..3 {
                action.movement[i] += self.rng.random_range(-j..=j);
            }
        }
        action.clamped()
    }

    fn greedy(&self, state: &EnvState, goal: &Vec3) -> Action {
        action_of(self.greedy_index(state, goal))
    }

    fn value(&self, s0: &EnvState, goal: &Vec3) -> f64 {
        let q = self.q_values(s0, goal);
        q[argmax(&q)]
    }

    fn update(&mut self, batch: &[Transition]) -> UpdateStats {
        let QConfig { gamma, learning_rate: eta, .. } = self.config;
        let mut total = 0.0;
        for tr in batch {
            let a = discretize_action(&tr.action);
            let bootstrap = if tr.done { 0.0 } else { self.value(&tr.next_state, &tr.goal) };
            let target = tr.reward + gamma * bootstrap;
            let key = self.key(&tr.state, &tr.goal);
            let q = &mut self.table.entry(key).or_insert([0.0; N_ACTIONS])[a];
            let td = target - *q;
            *q += eta * td;
            total += td.abs();
        }
        UpdateStats { mean_abs_td: if batch.is_empty() { 0.0 } else { total / batch.len() as f64 }, transitions: batch.len() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(x: f64) -> EnvState {
        let p = Vec3::new(x, 0.01, 0.01);
        EnvState { agent_pos: p, object_pos: p, holding: false, step_count: 0, done: false, carry: Vec3::zeros() }
    }

    fn greedy_cfg() -> QConfig {
        QConfig { epsilon: 0.0, jitter: 0.0, ..QConfig::default() }
    }

    #[test]
    fn action_round_trip() {
        for a in 0..N_ACTIONS {
            assert_eq!(discretize_action(&action_of(a)), a);
        }
        let noisy = Action::new(Vec3::new(0.08, -0.95, 0.07), -1.0);
        assert_eq!(discretize_action(&noisy), 3);
        assert_eq!(discretize_action(&Action::new(Vec3::new(0.2, 0.3, 0.1), -0.5)), NOOP_ACTION);
    }

    #[test]
    fn greedy_picks_the_only_nonzero_positive_entry_and_breaks_ties_low() {
        let mut q = DiscretizedQ::new(greedy_cfg(), 0).unwrap();
        let (s, g) = (at(0.01), Vec3::new(0.3, 0.01, 0.01));
        assert_eq!(q.greedy_index(&s, &g), 0);
        assert_eq!(q.act(&s, &g, true), action_of(0));
        q.set_q(&s, &g, 4, 0.5);
        for _ in 0..10 {
            assert_eq!(q.act(&s, &g, true), action_of(4));
            assert_eq!(q.act(&s, &g, false), action_of(4));
        }
    }

    /// Chi-squared test with 7 degrees of freedom; 0.99 quantile is 18.475.
    #[test]
    fn full_exploration_is_uniform() {
        let cfg = QConfig { epsilon: 1.0, jitter: 0.0, ..QConfig::default() };
        let mut q = DiscretizedQ::new(cfg, 11).unwrap();
        let (s, g) = (at(0.01), Vec3::new(0.3, 0.01, 0.01));
        q.set_q(&s, &g, 2, 0.9);
        let mut counts = [0usize; N_ACTIONS];
        for _ in 0..10_000 {
            counts[discretize_action(&q.act(&s, &g, true))] += 1;
        }
        let e = 10_000.0 / N_ACTIONS as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 18.475, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn fresh_learner_values_are_zero() {
        let q = DiscretizedQ::new(QConfig::default(), 0).unwrap();
        assert_eq!(q.value(&at(0.1), &Vec3::new(0.4, 0.2, 0.0)), 0.0);
    }

    #[test]
    fn single_updates_match_direct_substitution() {
        let cfg = QConfig { learning_rate: 1.0, gamma: 0.98, ..greedy_cfg() };
        let mut q = DiscretizedQ::new(cfg, 0).unwrap();
        let g = Vec3::new(0.5, 0.01, 0.01);
        let step = |x0, x1, r, done| Transition { state: at(x0), goal: g, action: action_of(0), reward: r, next_state: at(x1), done };
        let s = q.update(&[step(0.49, 0.51, 0.0, true)]);
        assert_eq!(q.q_values(&at(0.49), &g)[0], 0.0);
        assert_eq!(s.mean_abs_td, 0.0);
        let s = q.update(&[step(0.11, 0.16, -1.0, false)]);
        assert_eq!(q.q_values(&at(0.11), &g)[0], -1.0);
        assert_eq!(s.mean_abs_td, 1.0);
    }

    /// Two states A, B and one action. A -> B with reward -1; B -> B with
    /// reward -1. Fixed point: Q(B) = -1/(1-gamma), Q(A) = -1 + gamma Q(B).
    #[test]
    fn converges_to_the_two_state_fixed_point() {
        let gamma = 0.9;
        let cfg = QConfig { gamma, learning_rate: 0.5, ..greedy_cfg() };
        let mut q = DiscretizedQ::new(cfg, 0).unwrap();
        let g = Vec3::new(2.0, 0.01, 0.01);
        let (a, b) = (0.01, 0.06);
        let batch = [
            Transition { state: at(a), goal: g, action: action_of(0), reward: -1.0, next_state: at(b), done: false },
            Transition { state: at(b), goal: g, action: action_of(0), reward: -1.0, next_state: at(b), done: false },
        ];
        // The table is optimistic, so the other actions would win the max;
        // pin them to the true action's value range by training them too.
        for _ in 0..2000 {
            for act in 0..N_ACTIONS {
                let batch: Vec<_> = batch.iter().map(|t| Transition { action: action_of(act), ..*t }).collect();
                q.update(&batch);
            }
        }
        let qb = -1.0 / (1.0 - gamma);
        let qa = -1.0 + gamma * qb;
        assert!((q.value(&at(b), &g) - qb).abs() < 1e-6);
        assert!((q.value(&at(a), &g) - qa).abs() < 1e-6);
    }

    #[test]
    fn td_error_shrinks_over_repeated_sweeps() {
        let cfg = QConfig { learning_rate: 0.3, ..greedy_cfg() };
        let mut q = DiscretizedQ::new(cfg, 0).unwrap();
        let g = Vec3::new(0.26, 0.01, 0.01);
        let batch: Vec<_> = (0..5)
            .map(|i| {
                let x0 = 0.025 + 0.05 * i as f64;
                let r = if i == 4 { 0.0 } else { -1.0 };
                Transition { state: at(x0), goal: g, action: action_of(0), reward: r, next_state: at(x0 + 0.05), done: i == 4 }
            })
            .collect();
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let s = q.update(&batch).mean_abs_td;
            assert!(s <= prev + 1e-12, "{s} > {prev}");
            prev = s;
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        let mut q = DiscretizedQ::new(QConfig::default(), 5).unwrap();
        let g = Vec3::new(0.3, 0.2, 0.0);
        q.set_q(&at(0.1), &g, 3, -0.7);
        q.set_q(&at(0.2), &g, 1, -0.2);
        q.save(&path).unwrap();
        let mut back = DiscretizedQ::load(&path).unwrap();
        assert_eq!(back.q_values(&at(0.1), &g), q.q_values(&at(0.1), &g));
        assert_eq!(back.table_len(), 2);
        for _ in 0..20 {
            assert_eq!(back.act(&at(0.2), &g, true), q.act(&at(0.2), &g, true));
        }
    }

    proptest! {
        #[test]
        fn values_stay_within_the_reward_bounds(
            steps in proptest::collection::vec((0usize..6, 0usize..6, 0usize..N_ACTIONS, proptest::bool::ANY), 1..60),
            eta in 0.05f64..=1.0,
            gamma in 0.5f64..0.99,
        ) {
            let cfg = QConfig { learning_rate: eta, gamma, ..greedy_cfg() };
            let mut q = DiscretizedQ::new(cfg, 0).unwrap();
            let g = Vec3::new(0.125, 0.01, 0.01);
            let batch: Vec<_> = steps.iter().map(|&(i, j, a, success)| Transition {
                state: at(0.025 + 0.05 * i as f64),
                goal: g,
                action: action_of(a),
                reward: if success { 0.0 } else { -1.0 },
                next_state: at(0.025 + 0.05 * j as f64),
                done: success,
            }).collect();
            for _ in 0..20 {
                q.update(&batch);
            }
            for i in 0..6 {
                let v = q.value(&at(0.025 + 0.05 * i as f64), &g);
                prop_assert!(v <= 0.0 && v >= -1.0 / (1.0 - gamma) - 1e-9);
            }
        }
    }
}
