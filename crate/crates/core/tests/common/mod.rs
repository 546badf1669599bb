//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use minconsensus::graph::WeightedGraph;
use rand::Rng;

/// Shortest distance to any source by enumerating every simple path.
pub fn path_distances(g: &WeightedGraph) -> Vec<f64> {
    fn walk(g: &WeightedGraph, u: usize, len: f64, seen: &mut Vec<bool>, best: &mut f64) {
        if g.is_source(u) {
            *best = best.min(len);
            return;
        }
        for nb in g.neighbors(u) {
            if !seen[nb.node] {
                seen[nb.node] = true;
                walk(g, nb.node, len + nb.weight, seen, best);
                seen[nb.node] = false;
            }
        }
    }
    (0..g.node_count())
        .map(|i| {
            let mut seen = vec![false; g.node_count()];
            seen[i] = true;
            let mut best = f64::INFINITY;
            walk(g, i, 0.0, &mut seen, &mut best);
            best
        })
        .collect()
}

/// Neighbors on some shortest path, by exact comparison.
pub fn constraining(g: &WeightedGraph, d: &[f64]) -> Vec<Vec<usize>> {
    (0..g.node_count())
        .map(|i| {
            if g.is_source(i) {
                return vec![];
            }
            let mut c: Vec<usize> = g
                .neighbors(i)
                .iter()
                .filter(|nb| d[nb.node] + nb.weight == d[i])
                .map(|nb| nb.node)
                .collect();
            c.sort();
            c
        })
        .collect()
}

pub fn zeta(g: &WeightedGraph, d: &[f64], c: &[Vec<usize>]) -> f64 {
    let mut best = 0.0_f64;
    for i in 0..g.node_count() {
        for nb in g.neighbors(i) {
            if !c[i].contains(&nb.node) {
                best = best.max(d[i] / (d[nb.node] + nb.weight));
            }
        }
    }
    if best > 0.0 {
        best
    } else {
        0.5
    }
}

/// Node count of the longest chain that follows constraining links.
pub fn diameter(c: &[Vec<usize>]) -> usize {
    fn longest(c: &[Vec<usize>], i: usize) -> usize {
        1 + c[i].iter().map(|&j| longest(c, j)).max().unwrap_or(0)
    }
    (0..c.len()).map(|i| longest(c, i)).max().unwrap_or(0)
}

/// Largest slope product over all simple cycles (0 if acyclic).
pub fn max_cycle_product(m: &[Vec<f64>]) -> f64 {
    fn extend(m: &[Vec<f64>], start: usize, u: usize, prod: f64, seen: &mut Vec<bool>, best: &mut f64) {
        for v in start..m.len() {
            if m[u][v] <= 0.0 {
                continue;
            }
            if v == start {
                *best = best.max(prod * m[u][v]);
            } else if !seen[v] {
                seen[v] = true;
                extend(m, start, v, prod * m[u][v], seen, best);
                seen[v] = false;
            }
        }
    }
    let mut best = 0.0;
    for s in 0..m.len() {
        let mut seen = vec![false; m.len()];
        seen[s] = true;
        extend(m, s, s, 1.0, &mut seen, &mut best);
    }
    best
}

/// Random connected graph on `n` nodes with integer weights in `1..=3`.
pub fn random_small_graph<R: Rng>(rng: &mut R, n: usize) -> WeightedGraph {
    loop {
        let density = rng.gen_range(0.2..0.9);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(density) {
                    edges.push((i, j, rng.gen_range(1..=3) as f64));
                }
            }
        }
        let sources: Vec<usize> = if n > 2 && rng.gen_bool(0.3) { vec![0, n - 1] } else { vec![0] };
        if let Ok(g) = WeightedGraph::new(n, &edges, &sources) {
            return g;
        }
    }
}
