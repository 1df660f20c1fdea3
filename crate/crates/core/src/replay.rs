//! Trajectory storage with hindsight relabeling.
//!
//! The buffer keeps whole episodes in a FIFO ring. Every stored time step
//! contributes one original transition plus `k_future` relabeled ones whose
//! goal is the achieved goal at a later step of the same episode. Relabeled
//! transitions are stored as compact references (episode, step, goal step)
//! and materialized on sampling, so the original episode data is never
//! modified.

use std::collections::VecDeque;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{abstraction_m, sparse_reward, Action, EnvState};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const DUMP_KIND: &str = "hindsight-atlas/replay";
const DUMP_VERSION: u32 = 1;

/// One goal-conditioned transition `(s_t || g, a_t, r_t, s_{t+1} || g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: EnvState,
    pub goal: Vec3,
    pub action: Action,
    pub reward: f64,
    pub next_state: EnvState,
    pub done: bool,
}

/// A recorded episode: `T + 1` states, `T` actions and the goal it pursued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<EnvState>,
    pub actions: Vec<Action>,
    pub goal: Vec3,
    pub achieved: Vec<Vec3>,
}

impl Trajectory {
    pub fn new(initial: EnvState, goal: Vec3) -> Self {
        Self { states: vec![initial], actions: Vec::new(), goal, achieved: vec![abstraction_m(&initial)] }
    }

    pub fn push(&mut self, action: Action, next: EnvState) {
        self.actions.push(action);
        self.achieved.push(abstraction_m(&next));
        self.states.push(next);
    }

    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn initial_state(&self) -> &EnvState {
        &self.states[0]
    }

    /// Transition `t` evaluated against an arbitrary goal.
    pub fn transition(&self, t: usize, goal: Vec3, threshold: f64) -> Transition {
        let reward = sparse_reward(&self.achieved[t + 1], &goal, threshold);
        Transition { state: self.states[t], goal, action: self.actions[t], reward, next_state: self.states[t + 1], done: reward == 0.0 }
    }
}

/// Draws `k` future steps uniformly from `(t, T]`.
pub fn sample_future_steps<R: Rng + ?Sized>(len: usize, t: usize, k: usize, rng: &mut R) -> Vec<usize> {
    assert!(t < len, "relabel step {t} out of range for a {len}-step trajectory");
    (0..k).map(|_| rng.random_range(t + 1..=len)).collect()
}

/// Relabels transition `t` with `k_future` achieved goals from later steps.
pub fn her_relabel<R: Rng + ?Sized>(traj: &Trajectory, t: usize, k_future: usize, threshold: f64, rng: &mut R) -> Vec<Transition> {
    sample_future_steps(traj.len(), t, k_future, rng).into_iter().map(|f| traj.transition(t, traj.achieved[f], threshold)).collect()
}

/// Sampling weight of a stored trajectory. The shipped priority is uniform;
/// energy-style schemes plug in here.
pub trait TrajectoryPriority {
    fn weight(&self, traj: &Trajectory) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPriority;

impl TrajectoryPriority for UniformPriority {
    fn weight(&self, _traj: &Trajectory) -> f64 {
        1.0
    }
}

impl<F: Fn(&Trajectory) -> f64> TrajectoryPriority for F {
    fn weight(&self, traj: &Trajectory) -> f64 {
        self(traj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Entry {
    seq: u64,
    step: u32,
    /// `None` for the original goal, otherwise the achieved-goal step.
    goal_step: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Stored {
    seq: u64,
    traj: Trajectory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    k_future: usize,
    threshold: f64,
    next_seq: u64,
    trajectories: VecDeque<Stored>,
    entries: VecDeque<Entry>,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
struct Dump {
    kind: String,
    version: u32,
    buffer: ReplayBuffer,
}

impl ReplayBuffer {
    /// `threshold` is the success radius used to recompute rewards.
    pub fn new(capacity: usize, k_future: usize, threshold: f64, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be at least one trajectory".into()));
        }
        Ok(Self {
            capacity,
            k_future,
            threshold,
            next_seq: 0,
            trajectories: VecDeque::with_capacity(capacity),
            entries: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn k_future(&self) -> usize {
        self.k_future
    }

    /// Stored trajectory count.
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Stored transition count, originals plus relabeled.
    pub fn transition_count(&self) -> usize {
        self.entries.len()
    }

    /// Appends an episode, evicting the oldest one when full. Returns the
    /// episode's id.
    pub fn push(&mut self, traj: Trajectory) -> u64 {
        if self.trajectories.len() == self.capacity {
            let old = self.trajectories.pop_front().expect("full buffer is non-empty");
            while self.entries.front().is_some_and(|e| e.seq == old.seq) {
                self.entries.pop_front();
            }
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        for t in 0..traj.len() {
            self.entries.push_back(Entry { seq, step: t as u32, goal_step: None });
            for f in sample_future_steps(traj.len(), t, self.k_future, &mut self.rng) {
                self.entries.push_back(Entry { seq, step: t as u32, goal_step: Some(f as u32) });
            }
        }
        self.trajectories.push_back(Stored { seq, traj });
        seq
    }

    /// Stored episodes with their ids, oldest first.
    pub fn trajectories(&self) -> impl DoubleEndedIterator<Item = (u64, &Trajectory)> + ExactSizeIterator {
        self.trajectories.iter().map(|s| (s.seq, &s.traj))
    }

    /// The `n` most recent episodes, oldest first.
    pub fn recent(&self, n: usize) -> Vec<(u64, &Trajectory)> {
        let skip = self.trajectories.len().saturating_sub(n);
        self.trajectories().skip(skip).collect()
    }

    pub fn get(&self, id: u64) -> Option<&Trajectory> {
        let first = self.trajectories.front()?.seq;
        let idx = usize::try_from(id.checked_sub(first)?).ok()?;
        self.trajectories.get(idx).map(|s| &s.traj)
    }

    fn materialize(&self, e: &Entry) -> Transition {
        let first = self.trajectories.front().expect("entries imply trajectories").seq;
        let traj = &self.trajectories[(e.seq - first) as usize].traj;
        let goal = match e.goal_step {
            None => traj.goal,
            Some(f) => traj.achieved[f as usize],
        };
        traj.transition(e.step as usize, goal, self.threshold)
    }

    /// All stored transitions in insertion order.
    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        self.entries.iter().map(|e| self.materialize(e))
    }

    /// Uniform minibatch, drawn with replacement, using the buffer's own
    /// random stream.
    pub fn sample_minibatch(&mut self, batch: usize) -> Result<Vec<Transition>> {
        let mut rng = self.rng.clone();
        let out = self.sample_minibatch_with(batch, &mut rng);
        self.rng = rng;
        out
    }

    /// Uniform minibatch, drawn with replacement from `rng`.
    pub fn sample_minibatch_with<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.entries.len();
        Ok((0..batch).map(|_| self.materialize(&self.entries[rng.random_range(0..n)])).collect())
    }

    /// Minibatch where each transition is drawn with probability
    /// proportional to its episode's priority weight.
    pub fn sample_weighted<R: Rng + ?Sized>(
        &self,
        batch: usize,
        priority: &dyn TrajectoryPriority,
        rng: &mut R,
    ) -> Result<Vec<Transition>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let first = self.trajectories[0].seq;
        let per_traj: Vec<f64> = self.trajectories.iter().map(|s| priority.weight(&s.traj)).collect();
        let weights = self.entries.iter().map(|e| per_traj[(e.seq - first) as usize]);
        let dist = WeightedIndex::new(weights).map_err(|e| Error::InvalidConfig(format!("invalid trajectory priorities: {e}")))?;
        Ok((0..batch).map(|_| self.materialize(&self.entries[dist.sample(rng)])).collect())
    }

    /// Writes the buffer, including its random stream, as versioned JSON.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let dump = Dump { kind: DUMP_KIND.into(), version: DUMP_VERSION, buffer: self.clone() };
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &dump)?;
        Ok(())
    }

    pub fn restore(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let dump: Dump = serde_json::from_reader(file)?;
        if dump.kind != DUMP_KIND {
            return Err(Error::Malformed { path: path.into(), reason: format!("not a replay dump ({})", dump.kind) });
        }
        if dump.version != DUMP_VERSION {
            return Err(Error::Version { kind: "replay dump", found: dump.version, expected: DUMP_VERSION });
        }
        Ok(dump.buffer)
    }
}
