//! Kinematic point-mass manipulation simulator.
//!
//! Two dynamics are supported. In `push` mode the end effector stays in
//! contact with the object and drives it across a plane; the gripper is
//! ignored. In `pick` mode the end effector moves freely in 3-D, grabs the
//! object when the grip command is positive within the grab radius, and
//! releases it on the next positive grip. A released object falls straight
//! down onto the table or the obstacle top beneath it. With
//! `release = "throw"` it first keeps moving for one step with the end
//! effector's last displacement.
//!
//! Every motion is swept against the obstacle boxes: a point stops
//! `CONTACT_SKIN` short of the face it would hit and slides along that face
//! with the remaining displacement.

mod presets;

pub use presets::{preset, preset_lattice, PRESET_NAMES};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{first_contact, AccessibleSpace, Bounds3, Cuboid, Vec3};

/// Gap kept between a stopped point and the obstacle face it touched.
pub const CONTACT_SKIN: f64 = 1e-6;

const MAX_SLIDES: usize = 3;
const MAX_RESET_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    Push,
    Pick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Release {
    #[default]
    Drop,
    Throw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetDistribution {
    /// Uniform over a box.
    Region { bounds: Bounds3 },
    /// Uniform over a finite goal set.
    Discrete { goals: Vec<Vec3> },
}

fn default_threshold() -> f64 {
    0.05
}
fn default_horizon() -> usize {
    100
}
fn default_action_scale() -> f64 {
    0.03
}
fn default_grab_radius() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub name: String,
    pub dynamics: Dynamics,
    #[serde(default)]
    pub release: Release,
    pub workspace: Bounds3,
    #[serde(default)]
    pub obstacles: Vec<Cuboid>,
    /// Bounds of the goal space covered by the graph; defaults to the
    /// workspace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_space: Option<Bounds3>,
    pub initial_region: Bounds3,
    pub targets: TargetDistribution,
    /// Success radius around the goal (meters).
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Displacement of a full-scale move command (meters per step).
    #[serde(default = "default_action_scale")]
    pub action_scale: f64,
    #[serde(default = "default_grab_radius")]
    pub grab_radius: f64,
}

/// Simulator state. The goal-space projection of a state is the object
/// position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agent_pos: Vec3,
    pub object_pos: Vec3,
    pub holding: bool,
    pub step_count: usize,
    pub done: bool,
    /// End-effector displacement of the previous step.
    pub carry: Vec3,
}

impl EnvState {
    pub fn achieved_goal(&self) -> Vec3 {
        self.object_pos
    }
}

/// State abstraction mapping a state to the goal space.
pub fn abstraction_m(state: &EnvState) -> Vec3 {
    state.object_pos
}

/// Continuous action: a move command in `[-1, 1]^3` and a grip command in
/// `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub movement: Vec3,
    pub grip: f64,
}

impl Action {
    pub fn new(movement: Vec3, grip: f64) -> Self {
        Self { movement, grip }.clamped()
    }

    pub fn zero() -> Self {
        Self { movement: Vec3::zeros(), grip: -1.0 }
    }

    pub fn clamped(self) -> Self {
        Self { movement: self.movement.map(|v| v.clamp(-1.0, 1.0)), grip: self.grip.clamp(-1.0, 1.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Sparse reward: 0 when the achieved goal is within `threshold` of `goal`,
/// -1 otherwise.
pub fn sparse_reward(achieved: &Vec3, goal: &Vec3, threshold: f64) -> f64 {
    if (achieved - goal).norm() <= threshold {
        0.0
    } else {
        -1.0
    }
}

fn sample_in<R: Rng + ?Sized>(b: &Bounds3, rng: &mut R) -> Vec3 {
    Vec3::new(rng.random_range(b.x_min..=b.x_max), rng.random_range(b.y_min..=b.y_max), rng.random_range(b.z_min..=b.z_max))
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("environment '{}': {msg}", self.name)));
        self.workspace.validate()?;
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate(i)?;
            if !o.intersects_bounds(&self.workspace) {
                return Err(Error::InvalidObstacle { index: i, reason: "obstacle lies entirely outside the workspace".into() });
            }
        }
        if let Some(gs) = &self.goal_space {
            gs.validate()?;
        }
        self.initial_region.validate()?;
        if !self.workspace.encloses(&self.initial_region) {
            return bad("initial region must lie inside the workspace".into());
        }
        match &self.targets {
            TargetDistribution::Region { bounds } => {
                bounds.validate()?;
                if !self.workspace.encloses(bounds) {
                    return bad("target region must lie inside the workspace".into());
                }
            }
            TargetDistribution::Discrete { goals } => {
                if goals.is_empty() {
                    return bad("discrete target set is empty".into());
                }
                if let Some(g) = goals.iter().find(|g| !self.workspace.contains(g) || self.in_obstacle(g)) {
                    return bad(format!("target goal {:?} is outside the workspace or inside an obstacle", g.as_slice()));
                }
            }
        }
        if !(self.success_threshold > 0.0) || !(self.action_scale > 0.0) || !(self.grab_radius >= 0.0) {
            return bad("success_threshold and action_scale must be positive, grab_radius non-negative".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least one step".into());
        }
        Ok(())
    }

    pub fn in_obstacle(&self, p: &Vec3) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }

    /// Goal-space bounds for the graph (the workspace unless overridden).
    pub fn goal_bounds(&self) -> Bounds3 {
        self.goal_space.unwrap_or(self.workspace)
    }

    /// Accessible goal space seen by the graph: goal bounds minus the
    /// obstacles that reach into them.
    pub fn accessible_space(&self) -> Result<AccessibleSpace> {
        let bounds = self.goal_bounds();
        let obstacles = self.obstacles.iter().filter(|o| o.intersects_bounds(&bounds)).cloned().collect();
        AccessibleSpace::new(bounds, obstacles)
    }

    pub fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match &self.targets {
            TargetDistribution::Region { bounds } => sample_in(bounds, rng),
            TargetDistribution::Discrete { goals } => goals[rng.random_range(0..goals.len())],
        }
    }

    /// Height the object comes to rest at when dropped at `p`.
    fn support_height(&self, p: &Vec3) -> f64 {
        let mut z = self.workspace.z_min;
        for o in &self.obstacles {
            let (lo, hi) = (o.min(), o.max());
            let over = p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
            if over && hi.z <= p.z {
                z = z.max(hi.z + CONTACT_SKIN);
            }
        }
        z.min(p.z)
    }

    /// Sweeps a point along `delta`, clamped to the workspace, stopping at
    /// obstacle faces and sliding along them.
    pub fn sweep(&self, from: &Vec3, delta: &Vec3) -> Vec3 {
        let mut pos = *from;
        let mut remaining = *delta;
        for _ in 0..MAX_SLIDES {
            let target = self.workspace.clamp(&(pos + remaining));
            let seg = target - pos;
            if seg == Vec3::zeros() {
                break;
            }
            let hit = self.obstacles.iter().filter_map(|o| first_contact(&pos, &seg, o)).min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((t, axis)) = hit else {
                pos = target;
                break;
            };
            let len = seg.norm();
            let travel = (t * len - CONTACT_SKIN).max(0.0);
            pos += seg * (travel / len);
            remaining = seg * (1.0 - t);
            remaining[axis] = 0.0;
        }
        pos
    }

    fn settle(&self, p: Vec3) -> Vec3 {
        Vec3::new(p.x, p.y, self.support_height(&p))
    }
}

/// Samples an initial state and a target goal from the task distribution.
pub fn reset<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> (EnvState, Vec3) {
    let mut object = sample_in(&config.initial_region, rng);
    for _ in 0..MAX_RESET_ATTEMPTS {
        if !config.in_obstacle(&object) {
            break;
        }
        object = sample_in(&config.initial_region, rng);
    }
    if config.dynamics == Dynamics::Pick {
        object = config.settle(object);
    }
    let state = EnvState { agent_pos: object, object_pos: object, holding: false, step_count: 0, done: false, carry: Vec3::zeros() };
    let goal = config.sample_goal(rng);
    (state, goal)
}

/// Advances the simulator by one step toward `goal`.
pub fn step(config: &EnvConfig, state: &EnvState, goal: &Vec3, action: &Action) -> Result<StepOutcome> {
    if state.done || state.step_count >= config.horizon {
        return Err(Error::EpisodeOver);
    }
    let action = action.clamped();
    let mut next = *state;
    next.step_count += 1;
    let mut delta = action.movement * config.action_scale;

    match config.dynamics {
        Dynamics::Push => {
            delta.z = 0.0;
            let pos = config.sweep(&state.object_pos, &delta);
            next.carry = pos - state.object_pos;
            next.object_pos = pos;
            next.agent_pos = pos;
        }
        Dynamics::Pick => {
            let mut released = false;
            if action.grip > 0.0 {
                if state.holding {
                    next.holding = false;
                    released = true;
                } else {
                    let gap = state.object_pos - state.agent_pos;
                    let reachable = gap.norm() <= config.grab_radius
                        && !config
                            .obstacles
                            .iter()
                            .any(|o| crate::geometry::segment_intersects_cuboid(&state.object_pos, &state.agent_pos, o));
                    if reachable {
                        next.holding = true;
                        next.object_pos = state.agent_pos;
                    }
                }
            }
            let agent = config.sweep(&state.agent_pos, &delta);
            next.carry = agent - state.agent_pos;
            next.agent_pos = agent;
            if next.holding {
                next.object_pos = agent;
            } else if released {
                let mut obj = state.object_pos;
                if config.release == Release::Throw {
                    obj = config.sweep(&obj, &state.carry);
                }
                next.object_pos = config.settle(obj);
            }
        }
    }

    let reward = sparse_reward(&next.object_pos, goal, config.success_threshold);
    let done = reward == 0.0 || next.step_count >= config.horizon;
    next.done = done;
    Ok(StepOutcome { state: next, reward, done })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::segment_intersects_cuboid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn zero_action_only_advances_the_clock() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let (s, g) = reset(&cfg, &mut rng);
            let out = step(&cfg, &s, &g, &Action::zero()).unwrap();
            assert_eq!(out.state.object_pos, s.object_pos, "{name}");
            assert_eq!(out.state.agent_pos, s.agent_pos);
            assert_eq!(out.state.holding, s.holding);
            assert_eq!(out.state.step_count, 1);
        }
    }

    #[test]
    fn pushing_into_a_wall_stops_at_the_face() {
        let cfg = preset("labyrinth-push").unwrap();
        let wall = &cfg.obstacles[0];
        let below = wall.min().y - 0.01;
        let mut s = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).0;
        s.object_pos = unit(wall.center.x, below, s.object_pos.z);
        s.agent_pos = s.object_pos;
        let goal = unit(0.0, 0.0, s.object_pos.z);
        let out = step(&cfg, &s, &goal, &Action::new(unit(0.0, 1.0, 0.0), -1.0)).unwrap();
        let face = wall.min().y;
        assert!(out.state.object_pos.y < face);
        assert!(face - out.state.object_pos.y <= 2.0 * CONTACT_SKIN);
        assert!(!wall.contains(&out.state.object_pos));
        let again = step(&cfg, &out.state, &goal, &Action::new(unit(0.0, 1.0, 0.0), -1.0)).unwrap();
        assert!(!wall.contains(&again.state.object_pos));
    }

    #[test]
    fn sliding_along_a_face_keeps_the_parallel_motion() {
        let cfg = preset("labyrinth-push").unwrap();
        let wall = &cfg.obstacles[0];
        let start = unit(wall.center.x, wall.min().y - 0.001, 0.01);
        let end = cfg.sweep(&start, &unit(0.02, 0.02, 0.0));
        assert!((end.x - (start.x + 0.02)).abs() <= CONTACT_SKIN);
        assert!(end.y < wall.min().y);
    }

    #[test]
    fn success_gives_zero_reward_and_ends_the_episode() {
        let cfg = preset("pick-no-obstacle").unwrap();
        let (s, _) = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let goal = s.object_pos + unit(0.01, 0.0, 0.0);
        let out = step(&cfg, &s, &goal, &Action::zero()).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.done);
        assert!(matches!(step(&cfg, &out.state, &goal, &Action::zero()), Err(Error::EpisodeOver)));
    }

    #[test]
    fn horizon_ends_the_episode() {
        let mut cfg = preset("pick-no-obstacle").unwrap();
        cfg.horizon = 3;
        let (mut s, _) = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let goal = unit(10.0, 10.0, 10.0);
        for i in 0..3 {
            let out = step(&cfg, &s, &goal, &Action::zero()).unwrap();
            assert_eq!(out.done, i == 2);
            assert_eq!(out.reward, -1.0);
            s = out.state;
        }
        assert!(matches!(step(&cfg, &s, &goal, &Action::zero()), Err(Error::EpisodeOver)));
    }

    #[test]
    fn pick_then_carry_moves_the_object() {
        let cfg = preset("pick-no-obstacle").unwrap();
        let (s, _) = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let goal = unit(10.0, 10.0, 10.0);
        let grabbed = step(&cfg, &s, &goal, &Action::new(Vec3::zeros(), 1.0)).unwrap().state;
        assert!(grabbed.holding);
        let mut cur = grabbed;
        for _ in 0..3 {
            cur = step(&cfg, &cur, &goal, &Action::new(unit(0.0, 0.0, 1.0), -1.0)).unwrap().state;
        }
        let expected = s.object_pos + unit(0.0, 0.0, 3.0 * cfg.action_scale);
        assert!((abstraction_m(&cur) - expected).norm() < 1e-12);
        // Dropping returns it to the table.
        let dropped = step(&cfg, &cur, &goal, &Action::new(Vec3::zeros(), 1.0)).unwrap().state;
        assert!(!dropped.holding);
        assert_eq!(dropped.object_pos.z, cfg.workspace.z_min);
    }

    #[test]
    fn object_ignores_the_agent_when_not_held() {
        let cfg = preset("pick-no-obstacle").unwrap();
        let (s, _) = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let goal = unit(10.0, 10.0, 10.0);
        let mut cur = s;
        for _ in 0..5 {
            cur = step(&cfg, &cur, &goal, &Action::new(unit(1.0, 0.3, 0.5), -1.0)).unwrap().state;
            assert_eq!(abstraction_m(&cur), s.object_pos);
        }
        assert_ne!(cur.agent_pos, s.agent_pos);
    }

    #[test]
    fn throw_release_carries_one_step_of_momentum() {
        let cfg = preset("pick-and-throw-lite").unwrap();
        let (s, _) = reset(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let goal = unit(10.0, 10.0, 10.0);
        let mut cur = step(&cfg, &s, &goal, &Action::new(Vec3::zeros(), 1.0)).unwrap().state;
        for _ in 0..6 {
            cur = step(&cfg, &cur, &goal, &Action::new(unit(0.0, 0.0, 1.0), -1.0)).unwrap().state;
        }
        cur = step(&cfg, &cur, &goal, &Action::new(unit(1.0, 0.0, 0.0), -1.0)).unwrap().state;
        let before = cur.object_pos;
        let released = step(&cfg, &cur, &goal, &Action::new(Vec3::zeros(), 1.0)).unwrap().state;
        assert!((released.object_pos.x - (before.x + cfg.action_scale)).abs() < 1e-9);
        assert!(released.object_pos.z < before.z);
    }

    #[test]
    fn reset_samples_from_the_task_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lab = preset("labyrinth-push").unwrap();
        let TargetDistribution::Region { bounds } = &lab.targets else { panic!() };
        for _ in 0..200 {
            let (s, g) = reset(&lab, &mut rng);
            assert!(lab.initial_region.contains(&s.object_pos));
            assert!(bounds.contains(&g));
            assert_eq!(s.step_count, 0);
            // Start and goal sit on opposite sides of the top wall.
            let wall = &lab.obstacles[0];
            assert!(s.object_pos.y < wall.min().y && g.y > wall.max().y);
        }
        let pick = preset("pick-no-obstacle").unwrap();
        for _ in 0..200 {
            let (s, g) = reset(&pick, &mut rng);
            assert!(g.z > pick.workspace.z_min + 0.05);
            assert_eq!(s.object_pos.z, pick.workspace.z_min);
        }
        let throw = preset("pick-and-throw-lite").unwrap();
        let TargetDistribution::Discrete { goals } = &throw.targets else { panic!() };
        assert_eq!(goals.len(), 8);
        for _ in 0..200 {
            let (_, g) = reset(&throw, &mut rng);
            assert!(goals.contains(&g));
        }
    }

    #[test]
    fn random_rollouts_never_cross_obstacles_and_are_deterministic() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let run = |seed: u64| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut trace = Vec::new();
                for _ in 0..20 {
                    let (mut s, g) = reset(&cfg, &mut rng);
                    while !s.done {
                        let a = Action::new(
                            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                            rng.random_range(-1.0..1.0),
                        );
                        let out = step(&cfg, &s, &g, &a).unwrap();
                        for o in &cfg.obstacles {
                            assert!(!o.contains(&out.state.object_pos), "{name}: object inside obstacle");
                            assert!(!segment_intersects_cuboid(&s.object_pos, &out.state.object_pos, o), "{name}: crossed obstacle");
                        }
                        assert!(cfg.workspace.contains(&out.state.object_pos));
                        assert_eq!(out.reward == 0.0, (out.state.object_pos - g).norm() <= cfg.success_threshold);
                        s = out.state;
                        trace.push(s.object_pos);
                    }
                }
                trace
            };
            let (a, b) = (run(9), run(9));
            assert!(a.iter().zip(&b).all(|(p, q)| p.iter().zip(q.iter()).all(|(x, y)| x.to_bits() == y.to_bits())));
        }
    }
}
