use crate::error::{Error, Result};
use crate::geometry::{Bounds3, Cuboid, Vec3};

use super::{Dynamics, EnvConfig, Release, TargetDistribution};

pub const PRESET_NAMES: [&str; 4] = ["labyrinth-push", "pick-obstacle", "pick-no-obstacle", "pick-and-throw-lite"];

fn b(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Bounds3 {
    Bounds3 { x_min: x.0, x_max: x.1, y_min: y.0, y_max: y.1, z_min: z.0, z_max: z.1 }
}

fn wall(name: &str, x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Cuboid {
    let lo = Vec3::new(x.0, y.0, z.0);
    let hi = Vec3::new(x.1, y.1, z.1);
    Cuboid { name: Some(name.into()), center: (lo + hi) * 0.5, half_extents: (hi - lo) * 0.5 }
}

/// A U-shaped wall open at the bottom. The object starts inside the U and
/// the goals lie just beyond its closed top, so a straight push is blocked.
fn labyrinth_push() -> EnvConfig {
    let z = (-0.01, 0.03);
    EnvConfig {
        name: "labyrinth-push".into(),
        dynamics: Dynamics::Push,
        release: Release::Drop,
        workspace: b((0.0, 0.5), (0.0, 0.5), (0.0, 0.02)),
        obstacles: vec![
            wall("top-wall", (0.10, 0.40), (0.30, 0.34), z),
            wall("left-wall", (0.10, 0.14), (0.10, 0.30), z),
            wall("right-wall", (0.36, 0.40), (0.10, 0.30), z),
        ],
        goal_space: None,
        initial_region: b((0.20, 0.30), (0.22, 0.27), (0.0, 0.02)),
        targets: TargetDistribution::Region { bounds: b((0.20, 0.30), (0.40, 0.46), (0.0, 0.02)) },
        success_threshold: 0.05,
        horizon: 100,
        action_scale: 0.03,
        grab_radius: 0.05,
    }
}

/// A full-width wall between the start area and elevated goals.
fn pick_obstacle() -> EnvConfig {
    EnvConfig {
        name: "pick-obstacle".into(),
        dynamics: Dynamics::Pick,
        release: Release::Drop,
        workspace: b((0.0, 0.4), (0.0, 0.6), (0.0, 0.3)),
        obstacles: vec![wall("wall", (0.0, 0.4), (0.27, 0.33), (0.0, 0.15))],
        goal_space: None,
        initial_region: b((0.05, 0.35), (0.05, 0.20), (0.0, 0.01)),
        targets: TargetDistribution::Region { bounds: b((0.05, 0.35), (0.40, 0.55), (0.05, 0.20)) },
        success_threshold: 0.05,
        horizon: 100,
        action_scale: 0.03,
        grab_radius: 0.05,
    }
}

fn pick_no_obstacle() -> EnvConfig {
    EnvConfig {
        name: "pick-no-obstacle".into(),
        dynamics: Dynamics::Pick,
        release: Release::Drop,
        workspace: b((0.0, 0.5), (0.0, 0.5), (0.0, 0.3)),
        obstacles: Vec::new(),
        goal_space: None,
        initial_region: b((0.10, 0.40), (0.10, 0.40), (0.0, 0.01)),
        targets: TargetDistribution::Region { bounds: b((0.10, 0.40), (0.10, 0.40), (0.10, 0.25)) },
        success_threshold: 0.05,
        horizon: 100,
        action_scale: 0.03,
        grab_radius: 0.05,
    }
}

/// Eight floor compartments separated by low dividers. The object has to be
/// lifted over the dividers and released above a compartment.
fn pick_and_throw_lite() -> EnvConfig {
    let z = (0.0, 0.08);
    let y_back = (0.34, 0.6);
    let xs = [0.065, 0.225, 0.375, 0.535];
    let ys = [0.41, 0.55];
    let goals = ys.iter().flat_map(|&y| xs.iter().map(move |&x| Vec3::new(x, y, 0.0))).collect();
    EnvConfig {
        name: "pick-and-throw-lite".into(),
        dynamics: Dynamics::Pick,
        release: Release::Throw,
        workspace: b((0.0, 0.6), (0.0, 0.6), (0.0, 0.3)),
        obstacles: vec![
            wall("front-divider", (0.0, 0.6), (0.32, 0.36), z),
            wall("middle-divider", (0.0, 0.6), (0.46, 0.50), z),
            wall("divider-1", (0.13, 0.17), y_back, z),
            wall("divider-2", (0.28, 0.32), y_back, z),
            wall("divider-3", (0.43, 0.47), y_back, z),
        ],
        goal_space: None,
        initial_region: b((0.20, 0.40), (0.05, 0.20), (0.0, 0.01)),
        targets: TargetDistribution::Discrete { goals },
        success_threshold: 0.05,
        horizon: 100,
        action_scale: 0.03,
        grab_radius: 0.05,
    }
}

/// Built-in environment by name.
pub fn preset(name: &str) -> Result<EnvConfig> {
    let cfg = match name {
        "labyrinth-push" => labyrinth_push(),
        "pick-obstacle" => pick_obstacle(),
        "pick-no-obstacle" => pick_no_obstacle(),
        "pick-and-throw-lite" => pick_and_throw_lite(),
        other => {
            return Err(Error::InvalidConfig(format!("unknown environment preset '{other}' (expected one of {})", PRESET_NAMES.join(", "))))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Default lattice counts (n_x, n_y, n_z) for a preset's goal graph.
pub fn preset_lattice(name: &str) -> Option<[usize; 3]> {
    match name {
        "labyrinth-push" => Some([17, 17, 2]),
        "pick-obstacle" => Some([9, 17, 7]),
        "pick-no-obstacle" => Some([11, 11, 7]),
        "pick-and-throw-lite" => Some([17, 17, 7]),
        _ => None,
    }
}
