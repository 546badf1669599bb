//! Weighted undirected graphs, random geometric generation, and the
//! structural constants of the shortest-path fixed point: distances `d`,
//! true constraining sets, the contraction constant `zeta` and the
//! effective diameter.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Absolute tolerance (distance units) for `d_j + w_ij == d_i`.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Value of `zeta` used when no node has a non-constraining neighbor.
pub const DEFAULT_ZETA: f64 = 0.5;

/// Retry cap for geometric generation.
pub const MAX_GENERATION_ATTEMPTS: u32 = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub weight: f64,
    /// Index into [`WeightedGraph::edges`].
    pub edge: usize,
}

/// Connected undirected graph with positive weights and a nonempty strict
/// subset of source nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    node_count: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<Neighbor>>,
    sources: Vec<usize>,
    is_source: Vec<bool>,
}

impl WeightedGraph {
    /// Builds and validates a graph. Edges are stored with `a < b`;
    /// adjacency lists are sorted by neighbor index.
    pub fn new(node_count: usize, edges: &[(usize, usize, f64)], sources: &[usize]) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 nodes for a strict source subset, got {node_count}"
            )));
        }
        let mut is_source = vec![false; node_count];
        for &s in sources {
            if s >= node_count {
                return Err(Error::InvalidGraph(format!("source {s} out of range")));
            }
            is_source[s] = true;
        }
        let source_count = is_source.iter().filter(|&&s| s).count();
        if source_count == 0 {
            return Err(Error::InvalidGraph("source set is empty".into()));
        }
        if source_count == node_count {
            return Err(Error::InvalidGraph("every node is a source".into()));
        }

        let mut stored = Vec::with_capacity(edges.len());
        let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); node_count];
        for &(i, j, w) in edges {
            if i >= node_count || j >= node_count {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self loop at node {i}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has non-positive or non-finite weight {w}"
                )));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            let edge = stored.len();
            stored.push(Edge { a, b, weight: w });
            adjacency[a].push(Neighbor { node: b, weight: w, edge });
            adjacency[b].push(Neighbor { node: a, weight: w, edge });
        }
        for (i, list) in adjacency.iter_mut().enumerate() {
            list.sort_by_key(|nb| nb.node);
            if let Some(pair) = list.windows(2).find(|p| p[0].node == p[1].node) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({i}, {})",
                    pair[0].node
                )));
            }
        }

        let mut sources: Vec<usize> = (0..node_count).filter(|&i| is_source[i]).collect();
        sources.dedup();
        let graph = Self {
            node_count,
            edges: stored,
            adjacency,
            sources,
            is_source,
        };
        if let Some(node) = graph.first_unreachable() {
            return Err(Error::Disconnected { node });
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn is_source(&self, i: usize) -> bool {
        self.is_source[i]
    }

    /// Weight of edge `{i, j}` if present.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .binary_search_by_key(&j, |nb| nb.node)
            .ok()
            .map(|pos| self.adjacency[i][pos].weight)
    }

    pub fn max_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).fold(0.0, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).fold(f64::INFINITY, f64::min)
    }

    /// Same graph with one extra edge.
    pub fn with_edge(&self, i: usize, j: usize, w: f64) -> Result<Self> {
        let mut edges = self.edge_triples();
        edges.push((i, j, w));
        Self::new(self.node_count, &edges, &self.sources)
    }

    pub fn edge_triples(&self) -> Vec<(usize, usize, f64)> {
        self.edges.iter().map(|e| (e.a, e.b, e.weight)).collect()
    }

    fn first_unreachable(&self) -> Option<usize> {
        let mut seen = vec![false; self.node_count];
        let mut queue: VecDeque<usize> = self.sources.iter().copied().collect();
        for &s in &self.sources {
            seen[s] = true;
        }
        while let Some(u) = queue.pop_front() {
            for nb in &self.adjacency[u] {
                if !seen[nb.node] {
                    seen[nb.node] = true;
                    queue.push_back(nb.node);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.node_count,
            sources: self.sources.clone(),
            edges: self.edges.iter().map(|e| (e.a, e.b, e.weight)).collect(),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        Self::new(file.n, &file.edges, &file.sources)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GraphFile =
            serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// On-disk graph format: `{"n": int, "sources": [int], "edges": [[i, j, w]]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub sources: Vec<usize>,
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra: `d_i` is the length of a shortest path from `i`
/// to its nearest source.
pub fn shortest_distances(g: &WeightedGraph) -> Result<Vec<f64>> {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in g.sources() {
        dist[s] = 0.0;
        heap.push(HeapEntry { dist: 0.0, node: s });
    }
    while let Some(HeapEntry { dist: du, node: u }) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        for nb in g.neighbors(u) {
            let candidate = du + nb.weight;
            if candidate < dist[nb.node] {
                dist[nb.node] = candidate;
                heap.push(HeapEntry {
                    dist: candidate,
                    node: nb.node,
                });
            }
        }
    }
    if let Some(node) = dist.iter().position(|d| !d.is_finite()) {
        return Err(Error::Disconnected { node });
    }
    Ok(dist)
}

/// `C(i) = { j in N(i) : d_j + w_ij = d_i }` for non-sources, empty for sources.
pub fn true_constraining_sets(g: &WeightedGraph, d: &[f64]) -> Vec<Vec<usize>> {
    (0..g.node_count())
        .map(|i| {
            if g.is_source(i) {
                return Vec::new();
            }
            g.neighbors(i)
                .iter()
                .filter(|nb| (d[nb.node] + nb.weight - d[i]).abs() <= TIE_TOLERANCE)
                .map(|nb| nb.node)
                .collect()
        })
        .collect()
}

/// Largest ratio `d_i / (d_l + w_il)` over non-constraining neighbors `l`.
///
/// Falls back to `default` when every ratio is zero or no node has a
/// non-constraining neighbor, since any value in (0, 1) is then valid.
pub fn compute_zeta_or(g: &WeightedGraph, d: &[f64], c: &[Vec<usize>], default: f64) -> f64 {
    let mut zeta = 0.0_f64;
    for i in 0..g.node_count() {
        for nb in g.neighbors(i) {
            if c[i].contains(&nb.node) {
                continue;
            }
            zeta = zeta.max(d[i] / (d[nb.node] + nb.weight));
        }
    }
    if zeta > 0.0 {
        zeta
    } else {
        default
    }
}

pub fn compute_zeta(g: &WeightedGraph, d: &[f64], c: &[Vec<usize>]) -> f64 {
    compute_zeta_or(g, d, c, DEFAULT_ZETA)
}

/// How the length of a constraining chain is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterMode {
    #[default]
    NodeCount,
    EdgeCount,
}

/// Longest chain `i_0, ..., i_h` with `i_{l-1}` in `C(i_l)`, by dynamic
/// programming over a topological order of the constraining relation.
pub fn effective_diameter_with(
    g: &WeightedGraph,
    c: &[Vec<usize>],
    mode: DiameterMode,
) -> Result<usize> {
    let n = g.node_count();
    // edge j -> i whenever j is in C(i)
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (i, preds) in c.iter().enumerate() {
        for &j in preds {
            successors[j].push(i);
            indegree[i] += 1;
        }
    }
    let mut chain = vec![1usize; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut visited = 0;
    while let Some(u) = queue.pop_front() {
        visited += 1;
        for &v in &successors[u] {
            chain[v] = chain[v].max(chain[u] + 1);
            indegree[v] -= 1;
            if indegree[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    if visited < n {
        let node = indegree.iter().position(|&deg| deg > 0).unwrap_or(0);
        return Err(Error::ConstrainingCycle { node });
    }
    let longest = chain.into_iter().max().unwrap_or(1);
    Ok(match mode {
        DiameterMode::NodeCount => longest,
        DiameterMode::EdgeCount => longest - 1,
    })
}

pub fn effective_diameter(g: &WeightedGraph, c: &[Vec<usize>]) -> Result<usize> {
    effective_diameter_with(g, c, DiameterMode::NodeCount)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructuralOptions {
    pub zeta_default: f64,
    pub diameter_mode: DiameterMode,
}

impl Default for StructuralOptions {
    fn default() -> Self {
        Self {
            zeta_default: DEFAULT_ZETA,
            diameter_mode: DiameterMode::NodeCount,
        }
    }
}

/// Per-graph quantities the stability bounds depend on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuralConstants {
    pub distances: Vec<f64>,
    pub constraining_sets: Vec<Vec<usize>>,
    pub zeta: f64,
    pub effective_diameter: usize,
}

impl StructuralConstants {
    pub fn compute(g: &WeightedGraph) -> Result<Self> {
        Self::compute_with(g, StructuralOptions::default())
    }

    pub fn compute_with(g: &WeightedGraph, options: StructuralOptions) -> Result<Self> {
        if !(options.zeta_default > 0.0 && options.zeta_default < 1.0) {
            return Err(Error::param(
                "zeta_default",
                format!("must lie in (0, 1), got {}", options.zeta_default),
            ));
        }
        let distances = shortest_distances(g)?;
        let constraining_sets = true_constraining_sets(g, &distances);
        let zeta = compute_zeta_or(g, &distances, &constraining_sets, options.zeta_default);
        let effective_diameter =
            effective_diameter_with(g, &constraining_sets, options.diameter_mode)?;
        Ok(Self {
            distances,
            constraining_sets,
            zeta,
            effective_diameter,
        })
    }

    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_true_constraining(&self, i: usize, j: usize) -> bool {
        self.constraining_sets[i].contains(&j)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    HopCount,
    Euclidean,
}

/// Random geometric graph in a `width x height` km rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricGraphSpec {
    pub node_count: usize,
    pub area_width: f64,
    pub area_height: f64,
    pub radius: f64,
    #[serde(default)]
    pub weight_mode: WeightMode,
    pub seed: u64,
}

impl GeometricGraphSpec {
    pub fn validate(&self) -> Result<()> {
        if self.node_count < 2 {
            return Err(Error::param("node_count", "must be at least 2"));
        }
        for (field, value) in [
            ("area_width", self.area_width),
            ("area_height", self.area_height),
            ("radius", self.radius),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(field, format!("must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Places nodes uniformly, links pairs within `radius`, and makes node 0
/// the single source. Each attempt draws from its own stream, so retries
/// after a disconnected draw are reproducible.
pub fn generate_geometric(spec: &GeometricGraphSpec) -> Result<WeightedGraph> {
    spec.validate()?;
    let n = spec.node_count;
    let r2 = spec.radius * spec.radius;
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = rng::stream_rng(spec.seed, stream::GRAPH + u64::from(attempt));
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                (
                    rng.gen::<f64>() * spec.area_width,
                    rng.gen::<f64>() * spec.area_height,
                )
            })
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let dx = points[i].0 - points[j].0;
                let dy = points[i].1 - points[j].1;
                let sq = dx * dx + dy * dy;
                if sq <= r2 {
                    let w = match spec.weight_mode {
                        WeightMode::HopCount => 1.0,
                        // coincident points would give a zero weight
                        WeightMode::Euclidean => sq.sqrt().max(f64::MIN_POSITIVE),
                    };
                    edges.push((i, j, w));
                }
            }
        }
        match WeightedGraph::new(n, &edges, &[0]) {
            Ok(g) => return Ok(g),
            Err(Error::Disconnected { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed {
        attempts: MAX_GENERATION_ATTEMPTS,
        nodes: n,
        radius: spec.radius,
    })
}

/// Reference graphs used throughout the tests and docs.
pub mod reference {
    use super::WeightedGraph;

    /// `0(S) - 1 - 2 - 3`, unit weights.
    pub fn path4() -> WeightedGraph {
        WeightedGraph::new(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], &[0]).unwrap()
    }

    /// Triangle with source 0, unit weights.
    pub fn triangle() -> WeightedGraph {
        WeightedGraph::new(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)], &[0]).unwrap()
    }

    /// `0(S)-1, 0-2, 1-3, 2-3`, unit weights.
    pub fn diamond() -> WeightedGraph {
        WeightedGraph::new(
            4,
            &[(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
            &[0],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::reference::*;
    use super::*;

    #[test]
    fn path_distances_and_constants() {
        let g = path4();
        let sc = StructuralConstants::compute(&g).unwrap();
        assert_eq!(sc.distances, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(
            sc.constraining_sets,
            vec![vec![], vec![0], vec![1], vec![2]]
        );
        assert_eq!(sc.zeta, 0.5);
        assert_eq!(sc.effective_diameter, 4);
    }

    #[test]
    fn triangle_constants() {
        let g = triangle();
        let sc = StructuralConstants::compute(&g).unwrap();
        assert_eq!(sc.distances, vec![0.0, 1.0, 1.0]);
        assert_eq!(sc.zeta, 0.5);
        assert_eq!(sc.effective_diameter, 2);
    }

    #[test]
    fn diamond_has_two_constraining_nodes() {
        let g = diamond();
        let d = shortest_distances(&g).unwrap();
        let c = true_constraining_sets(&g, &d);
        assert_eq!(c[3], vec![1, 2]);
        assert!(c[0].is_empty());
    }

    #[test]
    fn sources_anchor_at_zero() {
        let g = WeightedGraph::new(4, &[(0, 1, 2.0), (1, 2, 1.0), (2, 3, 0.5)], &[0, 3]).unwrap();
        let d = shortest_distances(&g).unwrap();
        assert_eq!(d[0], 0.0);
        assert_eq!(d[3], 0.0);
        assert_eq!(d[2], 0.5);
        assert_eq!(d[1], 1.5);
    }

    #[test]
    fn single_non_source_leaf() {
        // all nodes sources except one leaf
        let g = WeightedGraph::new(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 2.5)], &[0, 1, 2]).unwrap();
        let sc = StructuralConstants::compute(&g).unwrap();
        assert_eq!(sc.distances[3], 2.5);
        assert_eq!(sc.effective_diameter, 2);
        // only sources have non-constraining neighbors, all with ratio 0
        assert_eq!(sc.zeta, DEFAULT_ZETA);
    }

    #[test]
    fn edge_count_mode_is_shifted() {
        let g = path4();
        let d = shortest_distances(&g).unwrap();
        let c = true_constraining_sets(&g, &d);
        assert_eq!(effective_diameter_with(&g, &c, DiameterMode::EdgeCount).unwrap(), 3);
    }

    #[test]
    fn rejects_invalid_graphs() {
        assert!(matches!(
            WeightedGraph::new(3, &[(0, 1, 1.0)], &[0]),
            Err(Error::Disconnected { node: 2 })
        ));
        assert!(WeightedGraph::new(2, &[(0, 1, 1.0)], &[]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 1, 1.0)], &[0, 1]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 1, 0.0)], &[0]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 1, 1.0), (1, 0, 1.0)], &[0]).is_err());
        assert!(WeightedGraph::new(2, &[(0, 0, 1.0)], &[0]).is_err());
    }

    #[test]
    fn cyclic_constraining_relation_is_reported() {
        let g = triangle();
        let c = vec![vec![], vec![2], vec![1]];
        assert!(matches!(
            effective_diameter(&g, &c),
            Err(Error::ConstrainingCycle { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let g = diamond();
        let back = WeightedGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        let parsed = WeightedGraph::from_json(r#"{"n": 2, "sources": [0], "edges": [[0, 1, 1.5]]}"#)
            .unwrap();
        assert_eq!(parsed.weight(1, 0), Some(1.5));
    }

    #[test]
    fn geometric_two_nodes() {
        let spec = GeometricGraphSpec {
            node_count: 2,
            area_width: 1.0,
            area_height: 1.0,
            radius: 2.0,
            weight_mode: WeightMode::HopCount,
            seed: 0,
        };
        let g = generate_geometric(&spec).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.sources(), &[0]);
    }

    #[test]
    fn geometric_is_deterministic() {
        let spec = GeometricGraphSpec {
            node_count: 60,
            area_width: 1.0,
            area_height: 1.0,
            radius: 0.3,
            weight_mode: WeightMode::Euclidean,
            seed: 42,
        };
        let a = generate_geometric(&spec).unwrap();
        let b = generate_geometric(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.edges().iter().all(|e| e.weight <= 0.3 && e.weight > 0.0));
    }

    #[test]
    fn geometric_fails_with_tiny_radius() {
        let spec = GeometricGraphSpec {
            node_count: 50,
            area_width: 10.0,
            area_height: 10.0,
            radius: 1e-3,
            weight_mode: WeightMode::HopCount,
            seed: 1,
        };
        assert!(matches!(
            generate_geometric(&spec),
            Err(Error::GenerationFailed { .. })
        ));
    }
}
