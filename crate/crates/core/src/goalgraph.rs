//! Orthorhombic-lattice graph over the accessible goal space.
//!
//! Candidate vertices sit on a regular lattice spanning the goal-space
//! bounds; candidates inside an obstacle are dropped. Retained vertices are
//! joined to every lattice neighbour (up to 26) whose index differs by at most
//! one along each axis, with the euclidean length as weight.
//!
//! The density criterion (spacing strictly below every obstacle edge length)
//! guarantees each obstacle swallows at least one candidate. It does not stop
//! a diagonal edge from clipping an obstacle corner, so edges whose segment
//! touches an obstacle are left out and counted in [`GoalGraph::pruned_edges`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{AccessibleSpace, Bounds3, Vec3, AXES};

pub type VertexId = u32;

const GRAPH_FORMAT: &str = "hindsight-atlas/graph";
const GRAPH_VERSION: u32 = 1;

/// Vertex counts per axis and the spacing they induce over a bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub counts: [usize; 3],
    pub origin: Vec3,
    pub spacing: Vec3,
}

impl LatticeSpec {
    pub fn new(bounds: &Bounds3, n_x: usize, n_y: usize, n_z: usize) -> Result<Self> {
        let counts = [n_x, n_y, n_z];
        for (axis, &n) in counts.iter().enumerate() {
            if n < 2 {
                return Err(Error::InvalidLattice(format!("need at least 2 vertices along {}, got {n}", AXES[axis])));
            }
        }
        bounds.validate()?;
        let extent = bounds.extent();
        let spacing = Vec3::new(extent.x / (n_x - 1) as f64, extent.y / (n_y - 1) as f64, extent.z / (n_z - 1) as f64);
        Ok(Self { counts, origin: bounds.min(), spacing })
    }

    /// Total number of candidate positions `n = n_x * n_y * n_z`.
    pub fn candidates(&self) -> usize {
        self.counts.iter().product()
    }

    /// Row-major index with `i` (x) varying slowest.
    pub fn flat_index(&self, [i, j, k]: [usize; 3]) -> usize {
        (i * self.counts[1] + j) * self.counts[2] + k
    }

    pub fn coord_of(&self, flat: usize) -> [usize; 3] {
        let k = flat % self.counts[2];
        let rest = flat / self.counts[2];
        [rest / self.counts[1], rest % self.counts[1], k]
    }

    pub fn position(&self, [i, j, k]: [usize; 3]) -> Vec3 {
        Vec3::new(
            self.origin.x + self.spacing.x * i as f64,
            self.origin.y + self.spacing.y * j as f64,
            self.origin.z + self.spacing.z * k as f64,
        )
    }

    /// Rounds a continuous point to the nearest lattice coordinate, halves
    /// rounding up, clamped to the lattice.
    pub fn round(&self, g: &Vec3) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = ((g[a] - self.origin[a]) / self.spacing[a] + 0.5).floor();
            out[a] = r.clamp(0.0, (self.counts[a] - 1) as f64) as usize;
        }
        out
    }
}

/// Whether the lattice spacing is strictly finer than every obstacle edge.
pub fn check_density(space: &AccessibleSpace, spec: &LatticeSpec) -> bool {
    density_violation(space, spec).is_none()
}

/// First obstacle/axis pair breaking the density criterion.
pub fn density_violation(space: &AccessibleSpace, spec: &LatticeSpec) -> Option<Error> {
    for (index, obstacle) in space.obstacles.iter().enumerate() {
        let edges = obstacle.edges();
        for a in 0..3 {
            if !(spec.spacing[a] < edges[a]) {
                return Some(Error::DensityViolation {
                    obstacle: obstacle.label(index),
                    axis: AXES[a],
                    spacing: spec.spacing[a],
                    edge: edges[a],
                });
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalGraph {
    spec: LatticeSpec,
    space: AccessibleSpace,
    positions: Vec<Vec3>,
    coords: Vec<[usize; 3]>,
    lattice: Vec<Option<VertexId>>,
    adjacency: Vec<Vec<(VertexId, f64)>>,
    pruned_edges: usize,
    hash: String,
}

/// Offsets with a lexicographically positive direction; each undirected
/// lattice adjacency is visited exactly once.
fn forward_offsets() -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(13);
    for di in -1..=1i64 {
        for dj in -1..=1i64 {
            for dk in -1..=1i64 {
                if (di, dj, dk) > (0, 0, 0) {
                    out.push([di, dj, dk]);
                }
            }
        }
    }
    out
}

/// Builds the goal graph after enforcing the density criterion.
pub fn build_graph(space: &AccessibleSpace, n_x: usize, n_y: usize, n_z: usize) -> Result<GoalGraph> {
    space.validate()?;
    let spec = LatticeSpec::new(&space.bounds, n_x, n_y, n_z)?;
    if let Some(err) = density_violation(space, &spec) {
        return Err(err);
    }
    GoalGraph::from_spec(space.clone(), spec)
}

/// Builds the goal graph without checking the density criterion. Useful for
/// coarse diagnostic lattices; obstacle-crossing edges are still pruned.
pub fn build_graph_unchecked(space: &AccessibleSpace, n_x: usize, n_y: usize, n_z: usize) -> Result<GoalGraph> {
    space.validate()?;
    let spec = LatticeSpec::new(&space.bounds, n_x, n_y, n_z)?;
    GoalGraph::from_spec(space.clone(), spec)
}

impl GoalGraph {
    fn from_spec(space: AccessibleSpace, spec: LatticeSpec) -> Result<Self> {
        let total = spec.candidates();
        let mut lattice = vec![None; total];
        let mut positions = Vec::new();
        let mut coords = Vec::new();
        for (flat, slot) in lattice.iter_mut().enumerate() {
            let c = spec.coord_of(flat);
            let p = spec.position(c);
            if space.contains(&p) {
                *slot = Some(positions.len() as VertexId);
                positions.push(p);
                coords.push(c);
            }
        }
        if positions.is_empty() {
            return Err(Error::EmptyGraph);
        }

        let mut adjacency: Vec<Vec<(VertexId, f64)>> = vec![Vec::new(); positions.len()];
        let mut pruned_edges = 0;
        let offsets = forward_offsets();
        for v in 0..positions.len() {
            let c = coords[v];
            for off in &offsets {
                let mut nc = [0usize; 3];
                let mut inside = true;
                for a in 0..3 {
                    let x = c[a] as i64 + off[a];
                    if x < 0 || x >= spec.counts[a] as i64 {
                        inside = false;
                        break;
                    }
                    nc[a] = x as usize;
                }
                if !inside {
                    continue;
                }
                let Some(u) = lattice[spec.flat_index(nc)] else { continue };
                let (pv, pu) = (positions[v], positions[u as usize]);
                if space.segment_blocked(&pv, &pu) {
                    pruned_edges += 1;
                    continue;
                }
                let w = (pu - pv).norm();
                adjacency[v].push((u, w));
                adjacency[u as usize].push((v as VertexId, w));
            }
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(u, _)| u);
        }

        let mut graph = Self { spec, space, positions, coords, lattice, adjacency, pruned_edges, hash: String::new() };
        graph.hash = graph.compute_hash();
        Ok(graph)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn space(&self) -> &AccessibleSpace {
        &self.space
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn candidate_count(&self) -> usize {
        self.spec.candidates()
    }

    pub fn excluded_count(&self) -> usize {
        self.candidate_count() - self.vertex_count()
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Lattice adjacencies dropped because their segment touches an obstacle.
    pub fn pruned_edges(&self) -> usize {
        self.pruned_edges
    }

    pub fn position(&self, v: VertexId) -> Vec3 {
        self.positions[v as usize]
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn coord(&self, v: VertexId) -> [usize; 3] {
        self.coords[v as usize]
    }

    pub fn vertex_at(&self, coord: [usize; 3]) -> Option<VertexId> {
        if (0..3).any(|a| coord[a] >= self.spec.counts[a]) {
            return None;
        }
        self.lattice[self.spec.flat_index(coord)]
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, f64)] {
        &self.adjacency[v as usize]
    }

    /// Content hash identifying this graph (hex SHA-256).
    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn compute_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.space).expect("space serializes"));
        for c in self.spec.counts {
            h.update((c as u64).to_le_bytes());
        }
        for (v, list) in self.adjacency.iter().enumerate() {
            h.update((v as u64).to_le_bytes());
            for &(u, w) in list {
                h.update(u.to_le_bytes());
                h.update(w.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = GraphFile {
            format: GRAPH_FORMAT.to_string(),
            version: GRAPH_VERSION,
            hash: self.hash.clone(),
            space: self.space.clone(),
            counts: self.spec.counts,
            vertices: self.coords.iter().zip(&self.positions).map(|(c, p)| VertexRecord { coord: *c, position: *p }).collect(),
            adjacency: self.adjacency.clone(),
            pruned_edges: self.pruned_edges,
        };
        fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    /// Loads a saved graph. The graph is rebuilt from its stored space and
    /// lattice counts and must reproduce the stored content hash.
    pub fn load(path: &Path) -> Result<Self> {
        let file: GraphFile = serde_json::from_slice(&fs::read(path)?)?;
        if file.format != GRAPH_FORMAT {
            return Err(Error::Malformed { path: path.into(), reason: format!("unknown format '{}'", file.format) });
        }
        if file.version != GRAPH_VERSION {
            return Err(Error::Version { kind: "graph", found: file.version, expected: GRAPH_VERSION });
        }
        let [nx, ny, nz] = file.counts;
        let graph = build_graph_unchecked(&file.space, nx, ny, nz)?;
        let stored_matches =
            graph.positions.len() == file.vertices.len() && graph.adjacency == file.adjacency && graph.pruned_edges == file.pruned_edges;
        if !stored_matches || graph.hash != file.hash {
            return Err(Error::Malformed {
                path: path.into(),
                reason: "stored vertices or adjacency disagree with the lattice they claim to describe".into(),
            });
        }
        Ok(graph)
    }
}

#[derive(Serialize, Deserialize)]
struct VertexRecord {
    coord: [usize; 3],
    position: Vec3,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format: String,
    version: u32,
    hash: String,
    space: AccessibleSpace,
    counts: [usize; 3],
    vertices: Vec<VertexRecord>,
    adjacency: Vec<Vec<(VertexId, f64)>>,
    pruned_edges: usize,
}
