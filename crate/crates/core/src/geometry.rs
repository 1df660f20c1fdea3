//! Axis-aligned primitives for the goal space.
//!
//! Obstacles are closed sets: a point lying exactly on an obstacle face
//! belongs to the obstacle. Goal-space bounds are inclusive. A goal is
//! accessible when it sits inside the bounds and strictly outside every
//! obstacle.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

pub const AXES: [char; 3] = ['x', 'y', 'z'];

/// Inclusive axis-aligned box bounding a region of goal space, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds3 {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Bounds3 {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, z_min: f64, z_max: f64) -> Result<Self> {
        let b = Self { x_min, x_max, y_min, y_max, z_min, z_max };
        b.validate()?;
        Ok(b)
    }

    pub fn from_corners(min: Vec3, max: Vec3) -> Result<Self> {
        Self::new(min.x, max.x, min.y, max.y, min.z, max.z)
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            let (lo, hi) = (self.min()[axis], self.max()[axis]);
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::InvalidBounds(format!("{} range [{lo}, {hi}] must be finite with min < max", AXES[axis])));
            }
        }
        Ok(())
    }

    pub fn min(&self) -> Vec3 {
        Vec3::new(self.x_min, self.y_min, self.z_min)
    }

    pub fn max(&self) -> Vec3 {
        Vec3::new(self.x_max, self.y_max, self.z_max)
    }

    pub fn extent(&self) -> Vec3 {
        self.max() - self.min()
    }

    pub fn center(&self) -> Vec3 {
        (self.min() + self.max()) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min()[a] && p[a] <= self.max()[a])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        let (lo, hi) = (self.min(), self.max());
        Vec3::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y), p.z.clamp(lo.z, hi.z))
    }

    /// True when `other` lies completely inside `self`.
    pub fn encloses(&self, other: &Bounds3) -> bool {
        self.contains(&other.min()) && self.contains(&other.max())
    }
}

/// Axis-aligned obstacle box. Edge lengths are twice the half extents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl Cuboid {
    pub fn new(center: Vec3, half_extents: Vec3) -> Result<Self> {
        let c = Self { name: None, center, half_extents };
        c.validate(0)?;
        Ok(c)
    }

    /// Builds a cuboid from its two opposite corners.
    pub fn from_corners(a: Vec3, b: Vec3) -> Result<Self> {
        let lo = a.inf(&b);
        let hi = a.sup(&b);
        Self::new((lo + hi) * 0.5, (hi - lo) * 0.5)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let finite = self.center.iter().chain(self.half_extents.iter()).all(|v| v.is_finite());
        if !finite || self.half_extents.iter().any(|&h| h <= 0.0) {
            return Err(Error::InvalidObstacle {
                index,
                reason: format!("half extents {:?} must be finite and positive", self.half_extents.as_slice()),
            });
        }
        Ok(())
    }

    /// Human-readable label used in diagnostics.
    pub fn label(&self, index: usize) -> String {
        match &self.name {
            Some(name) => format!("#{index} '{name}'"),
            None => format!("#{index}"),
        }
    }

    pub fn min(&self) -> Vec3 {
        self.center - self.half_extents
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.half_extents
    }

    /// Edge lengths (alpha, beta, gamma).
    pub fn edges(&self) -> Vec3 {
        self.half_extents * 2.0
    }

    /// Closed containment: face points count as inside.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| (p[a] - self.center[a]).abs() <= self.half_extents[a])
    }

    pub fn intersects_bounds(&self, b: &Bounds3) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (0..3).all(|a| lo[a] <= b.max()[a] && hi[a] >= b.min()[a])
    }
}

/// Parameter interval `[enter, exit]` over which the line `p + t d` lies in
/// the closed cuboid, plus the axis whose slab was entered last, or `None` if
/// the line misses.
fn slab_interval(p: &Vec3, d: &Vec3, c: &Cuboid) -> Option<(f64, f64, usize)> {
    let (lo, hi) = (c.min(), c.max());
    let mut enter = f64::NEG_INFINITY;
    let mut exit = f64::INFINITY;
    let mut enter_axis = 0;
    for a in 0..3 {
        if d[a] == 0.0 {
            if p[a] < lo[a] || p[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let mut t0 = (lo[a] - p[a]) * inv;
        let mut t1 = (hi[a] - p[a]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > enter {
            enter = t0;
            enter_axis = a;
        }
        exit = exit.min(t1);
        if enter > exit {
            return None;
        }
    }
    Some((enter, exit, enter_axis))
}

/// Whether the open segment `(p1, p2)` meets the closed cuboid.
///
/// A degenerate segment (`p1 == p2`) is treated as the single point and
/// reports plain containment.
pub fn segment_intersects_cuboid(p1: &Vec3, p2: &Vec3, c: &Cuboid) -> bool {
    let d = p2 - p1;
    if d == Vec3::zeros() {
        return c.contains(p1);
    }
    match slab_interval(p1, &d, c) {
        Some((enter, exit, _)) => exit > 0.0 && enter < 1.0,
        None => false,
    }
}

/// Fraction of the motion `p -> p + d` that can be travelled before the
/// point first touches the closed cuboid, and the axis of the face it hits.
/// Returns `None` when the motion never touches it. `p` must lie outside the
/// cuboid.
pub fn first_contact(p: &Vec3, d: &Vec3, c: &Cuboid) -> Option<(f64, usize)> {
    if *d == Vec3::zeros() {
        return None;
    }
    let (enter, exit, axis) = slab_interval(p, d, c)?;
    if exit < 0.0 || enter > 1.0 {
        return None;
    }
    Some((enter.max(0.0), axis))
}

/// The accessible goal space: bounds minus the (closed) obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibleSpace {
    pub bounds: Bounds3,
    #[serde(default)]
    pub obstacles: Vec<Cuboid>,
}

impl AccessibleSpace {
    pub fn new(bounds: Bounds3, obstacles: Vec<Cuboid>) -> Result<Self> {
        let space = Self { bounds, obstacles };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        for (i, o) in self.obstacles.iter().enumerate() {
            o.validate(i)?;
            if !o.intersects_bounds(&self.bounds) {
                return Err(Error::InvalidObstacle { index: i, reason: "obstacle lies entirely outside the goal-space bounds".into() });
            }
        }
        Ok(())
    }

    pub fn in_obstacle(&self, g: &Vec3) -> bool {
        self.obstacles.iter().any(|o| o.contains(g))
    }

    pub fn contains(&self, g: &Vec3) -> bool {
        self.bounds.contains(g) && !self.in_obstacle(g)
    }

    /// True when the open segment between two points meets any obstacle.
    pub fn segment_blocked(&self, p1: &Vec3, p2: &Vec3) -> bool {
        self.obstacles.iter().any(|o| segment_intersects_cuboid(p1, p2, o))
    }
}
