use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid obstacle {index}: {reason}")]
    InvalidObstacle { index: usize, reason: String },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error(
        "graph density criterion violated by obstacle {obstacle}: \
         spacing along {axis} is {spacing:.6} m but the obstacle edge is only {edge:.6} m"
    )]
    DensityViolation { obstacle: String, axis: char, spacing: f64, edge: f64 },

    #[error("no lattice vertex survives obstacle exclusion")]
    EmptyGraph,

    #[error("graph has {vertices} vertices; distance tables are limited to {limit}")]
    GraphTooLarge { vertices: usize, limit: usize },

    #[error("goal ({0:.4}, {1:.4}, {2:.4}) is outside the accessible goal space")]
    OutsideAccessibleSpace(f64, f64, f64),

    #[error("every timestep of the trajectory maps outside the accessible goal space")]
    AllInfinite,

    #[error("goal selection needs {needed} trajectories but only {available} are available")]
    InsufficientTrajectories { needed: usize, available: usize },

    #[error("no finite-cost matching exists between target tasks and buffer trajectories")]
    Infeasible,

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("episode is over; reset the environment before stepping")]
    EpisodeOver,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("distance table does not belong to this graph (expected {expected}, found {found})")]
    GraphMismatch { expected: String, found: String },

    #[error("unsupported {kind} format version {found} (expected {expected})")]
    Version { kind: &'static str, found: u32, expected: u32 },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line tool: 2 for validation
    /// failures, 3 for everything that goes wrong at runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidBounds(_)
            | Error::InvalidObstacle { .. }
            | Error::InvalidLattice(_)
            | Error::DensityViolation { .. }
            | Error::EmptyGraph
            | Error::GraphTooLarge { .. }
            | Error::InvalidConfig(_) => 2,
            _ => 3,
        }
    }
}
