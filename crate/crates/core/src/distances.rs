//! All-pairs shortest distances over a [`GoalGraph`] and the graph-based
//! goal metric built on them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::goalgraph::{GoalGraph, VertexId};

/// Largest graph for which a dense table is allocated.
pub const MAX_TABLE_VERTICES: usize = 20_000;

const TABLE_MAGIC: &[u8; 8] = b"HATABLE\0";
const TABLE_VERSION: u32 = 1;

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: VertexId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then on vertex id.
        other.dist.total_cmp(&self.dist).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra writing into `row`.
pub fn dijkstra_into(graph: &GoalGraph, source: VertexId, row: &mut [f64]) {
    row.fill(f64::INFINITY);
    row[source as usize] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry { dist: 0.0, vertex: source });
    while let Some(HeapEntry { dist, vertex }) = heap.pop() {
        if dist > row[vertex as usize] {
            continue;
        }
        for &(u, w) in graph.neighbors(vertex) {
            let nd = dist + w;
            if nd < row[u as usize] {
                row[u as usize] = nd;
                heap.push(HeapEntry { dist: nd, vertex: u });
            }
        }
    }
}

/// Maps a goal to its lattice vertex, rounding each axis half-up.
///
/// If the rounded lattice point was removed by an obstacle, the closest
/// retained vertex by euclidean distance is returned instead (lowest id on
/// ties).
pub fn nearest_vertex(graph: &GoalGraph, g: &Vec3) -> Result<VertexId> {
    if !graph.space().contains(g) {
        return Err(Error::OutsideAccessibleSpace(g.x, g.y, g.z));
    }
    let coord = graph.spec().round(g);
    if let Some(v) = graph.vertex_at(coord) {
        return Ok(v);
    }
    let mut best = (f64::INFINITY, 0);
    for (v, p) in graph.positions().iter().enumerate() {
        let d = (p - g).norm_squared();
        if d < best.0 {
            best = (d, v as VertexId);
        }
    }
    Ok(best.1)
}

/// Dense `n x n` shortest-distance table tied to the graph it was computed on.
#[derive(Debug)]
pub struct DistanceTable {
    graph: Arc<GoalGraph>,
    dist: Vec<f64>,
    queries: AtomicU64,
}

/// Runs one Dijkstra per source vertex (in parallel) and collects the rows.
pub fn compute_apsp(graph: Arc<GoalGraph>) -> Result<DistanceTable> {
    let n = graph.vertex_count();
    if n > MAX_TABLE_VERTICES {
        return Err(Error::GraphTooLarge { vertices: n, limit: MAX_TABLE_VERTICES });
    }
    let mut dist = vec![f64::INFINITY; n * n];
    dist.par_chunks_mut(n).enumerate().for_each(|(src, row)| dijkstra_into(&graph, src as VertexId, row));
    // Path sums accumulate in different orders from the two endpoints; keep
    // the smaller so the table is exactly symmetric.
    for i in 0..n {
        for j in i + 1..n {
            let d = dist[i * n + j].min(dist[j * n + i]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    Ok(DistanceTable { graph, dist, queries: AtomicU64::new(0) })
}

impl DistanceTable {
    pub fn graph(&self) -> &GoalGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> Arc<GoalGraph> {
        Arc::clone(&self.graph)
    }

    pub fn len(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vertex_distance(&self, a: VertexId, b: VertexId) -> f64 {
        self.dist[a as usize * self.len() + b as usize]
    }

    pub fn row(&self, a: VertexId) -> &[f64] {
        let n = self.len();
        &self.dist[a as usize * n..(a as usize + 1) * n]
    }

    pub fn nearest_vertex(&self, g: &Vec3) -> Result<VertexId> {
        nearest_vertex(&self.graph, g)
    }

    /// `nearest_vertex` that yields `None` for inaccessible goals.
    pub fn try_vertex(&self, g: &Vec3) -> Option<VertexId> {
        nearest_vertex(&self.graph, g).ok()
    }

    /// Graph-based distance between two goals; infinite when either goal is
    /// not accessible or the two vertices are disconnected.
    pub fn graph_distance(&self, g1: &Vec3, g2: &Vec3) -> f64 {
        self.queries.fetch_add(1, AtomicOrdering::Relaxed);
        match (self.try_vertex(g1), self.try_vertex(g2)) {
            (Some(a), Some(b)) => self.vertex_distance(a, b),
            _ => f64::INFINITY,
        }
    }

    /// Number of metric queries served so far (graph distances and
    /// cost-matrix row lookups).
    pub fn query_count(&self) -> u64 {
        self.queries.load(AtomicOrdering::Relaxed)
    }

    pub(crate) fn record_queries(&self, n: u64) {
        self.queries.fetch_add(n, AtomicOrdering::Relaxed);
    }

    /// Vertex sequence of one shortest path from `a` to `b`, or `None` when
    /// they are disconnected. Among equally short continuations the lowest
    /// vertex id is taken.
    pub fn shortest_path(&self, a: VertexId, b: VertexId) -> Option<Vec<VertexId>> {
        if !self.vertex_distance(a, b).is_finite() {
            return None;
        }
        let mut path = vec![a];
        let mut cur = a;
        while cur != b {
            let remaining = self.vertex_distance(cur, b);
            let tol = 1e-9 * remaining.max(1.0);
            let next = self
                .graph
                .neighbors(cur)
                .iter()
                .find(|&&(u, w)| (w + self.vertex_distance(u, b) - remaining).abs() <= tol)
                .map(|&(u, _)| u)?;
            path.push(next);
            cur = next;
            if path.len() > self.len() {
                return None;
            }
        }
        Some(path)
    }

    /// Writes the table as little-endian binary, tagged with the graph hash.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(TABLE_MAGIC)?;
        out.write_all(&TABLE_VERSION.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        let hash = self.graph.hash().as_bytes();
        out.write_all(&(hash.len() as u32).to_le_bytes())?;
        out.write_all(hash)?;
        for d in &self.dist {
            out.write_all(&d.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, graph: Arc<GoalGraph>) -> Result<Self> {
        let malformed = |reason: &str| Error::Malformed { path: path.into(), reason: reason.into() };
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(malformed("not a distance table"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != TABLE_VERSION {
            return Err(Error::Version { kind: "distance table", found: version, expected: TABLE_VERSION });
        }
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b4)?;
        let mut hash = vec![0u8; u32::from_le_bytes(b4) as usize];
        input.read_exact(&mut hash)?;
        let hash = String::from_utf8(hash).map_err(|_| malformed("graph hash is not utf-8"))?;
        if hash != graph.hash() {
            return Err(Error::GraphMismatch { expected: graph.hash().to_string(), found: hash });
        }
        if n != graph.vertex_count() {
            return Err(malformed("vertex count disagrees with the graph"));
        }
        let mut dist = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            input.read_exact(&mut b8)?;
            dist.push(f64::from_le_bytes(b8));
        }
        Ok(Self { graph, dist, queries: AtomicU64::new(0) })
    }
}
