//! Random testing of the global K-boundedness of the composite map
//! `|G(xi, mu)|_inf <= |xi|_inf + |mu|_inf`.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::exec::{self, Mode};
use crate::graph::{StructuralConstants, WeightedGraph};
use crate::rng::{self, stream};

use super::model::{directed_index, PerturbationModel};

/// One composite-map evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KBoundSample {
    /// Error history, oldest row first, `delta + max_delay + 1` rows.
    pub history: Vec<Vec<f64>>,
    /// Composed delay per node per neighbor, in neighbor order.
    pub delays: Vec<Vec<usize>>,
    /// Input per directed link.
    pub input: Vec<f64>,
    /// Nodes that have not updated yet and keep their oldest value.
    pub idle: Vec<bool>,
    pub output: Vec<f64>,
    /// `|G|_inf / (|xi|_inf + |mu|_inf)`, 0 when both sides vanish.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KBoundReport {
    pub samples: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub first_violation: Option<KBoundSample>,
}

impl KBoundReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Error-coordinate composite map: for non-sources that have updated,
/// `min_j (xi_j(newest - tau_hat_ij) + mu_ij - d_i + d_j + w_ij)`; sources
/// map to 0 and idle nodes return their oldest history value.
pub fn composite_map(
    g: &WeightedGraph,
    sc: &StructuralConstants,
    history: &[Vec<f64>],
    delays: &[Vec<usize>],
    input: &[f64],
    idle: &[bool],
) -> Vec<f64> {
    let d = &sc.distances;
    let newest = history.len() - 1;
    (0..g.node_count())
        .map(|i| {
            if g.is_source(i) {
                return 0.0;
            }
            if idle[i] {
                return history[0][i];
            }
            g.neighbors(i)
                .iter()
                .zip(&delays[i])
                .map(|(nb, &tau)| {
                    // exactly zero on true constraining links, >= 0 elsewhere
                    let slack = if sc.is_true_constraining(i, nb.node) {
                        0.0
                    } else {
                        (d[nb.node] + nb.weight - d[i]).max(0.0)
                    };
                    history[newest - tau][nb.node] + input[directed_index(nb.edge, i, nb.node)] + slack
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn draw_sample(g: &WeightedGraph, sc: &StructuralConstants, pm: &PerturbationModel, seed: u64, s: usize) -> KBoundSample {
    let mut rng = rng::stream_rng(seed, stream::FUZZ + s as u64);
    let n = g.node_count();
    let span = pm.history_span();
    let amplitude = pm.noise_amplitude();
    let d = &sc.distances;
    let top = sc.max_distance().max(1.0);
    // estimates stay nonnegative, so errors live in [-d_i, top]
    let history: Vec<Vec<f64>> = (0..=span)
        .map(|_| {
            (0..n)
                .map(|i| if g.is_source(i) { 0.0 } else { rng.gen_range(-d[i]..=top) })
                .collect()
        })
        .collect();
    let delays: Vec<Vec<usize>> = (0..n)
        .map(|i| g.neighbors(i).iter().map(|_| rng.gen_range(0..=span)).collect())
        .collect();
    let mut input = vec![0.0; 2 * g.edges().len()];
    for (e, edge) in g.edges().iter().enumerate() {
        for slot in &mut input[2 * e..2 * e + 2] {
            let low = amplitude.min(0.99 * edge.weight);
            *slot = if amplitude > 0.0 { rng.gen_range(-low..=amplitude) } else { 0.0 };
        }
    }
    let idle_rate = rng.gen_range(0.0..0.2);
    let idle: Vec<bool> = (0..n).map(|_| rng.gen_bool(idle_rate)).collect();
    let output = composite_map(g, sc, &history, &delays, &input, &idle);
    let bound = history.iter().map(|row| sup(row)).fold(0.0, f64::max) + sup(&input);
    let out = sup(&output);
    let ratio = if bound > 0.0 { out / bound } else if out > 0.0 { f64::INFINITY } else { 0.0 };
    KBoundSample {
        history,
        delays,
        input,
        idle,
        output,
        ratio,
    }
}

pub fn check_k_boundedness(
    g: &WeightedGraph,
    sc: &StructuralConstants,
    pm: &PerturbationModel,
    samples: usize,
    seed: u64,
) -> Result<KBoundReport> {
    check_k_boundedness_with(g, sc, pm, samples, seed, Mode::default())
}

pub fn check_k_boundedness_with(
    g: &WeightedGraph,
    sc: &StructuralConstants,
    pm: &PerturbationModel,
    samples: usize,
    seed: u64,
    mode: Mode,
) -> Result<KBoundReport> {
    pm.validate(g)?;
    let drawn = exec::map_indexed(mode, samples, |s| {
        let sample = draw_sample(g, sc, pm, seed, s);
        let violated = sample.ratio > 1.0;
        (sample.ratio, violated.then_some(sample))
    });
    let mut report = KBoundReport {
        samples,
        violations: 0,
        max_ratio: 0.0,
        first_violation: None,
    };
    for (ratio, violation) in drawn {
        report.max_ratio = report.max_ratio.max(ratio);
        if let Some(sample) = violation {
            report.violations += 1;
            report.first_violation.get_or_insert(sample);
        }
    }
    Ok(report)
}
