use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Neighbor, StructuralConstants, WeightedGraph};

use super::model::{directed_index, DelayProcess, NoiseProcess};

pub(crate) const NEVER: u32 = u32::MAX;

/// Complete record of one perturbed run over rounds `0..=horizon`.
///
/// Row `k` holds the state after round `k`. For a node that has updated at
/// least once by round `k`, `constraining_node(k, i)` is the minimizer used
/// at its latest update and `effective_delay(k, i)` is the composed delay
/// `tau_hat_ij(k - 1)` for that minimizer.
#[derive(Clone, Debug)]
pub struct TrajectoryTrace {
    pub(crate) horizon: usize,
    pub(crate) max_delay: usize,
    pub(crate) delta: usize,
    pub(crate) distances: Vec<f64>,
    pub(crate) estimates: Vec<Vec<f64>>,
    pub(crate) errors: Vec<Vec<f64>>,
    pub(crate) error_sup: Vec<f64>,
    pub(crate) updated: Vec<Vec<bool>>,
    pub(crate) last_update: Vec<Vec<u32>>,
    pub(crate) constraining: Vec<Vec<u32>>,
    pub(crate) read_time: Vec<Vec<i32>>,
    pub(crate) input_sup_per_round: Vec<f64>,
    pub(crate) input_sup_norm: f64,
    pub(crate) input_bound: f64,
    pub(crate) delays: DelayProcess,
    pub(crate) noise: NoiseProcess,
}

impl TrajectoryTrace {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn node_count(&self) -> usize {
        self.distances.len()
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn estimates(&self) -> &[Vec<f64>] {
        &self.estimates
    }

    /// Error rows `x_hat(k) = d_hat(k) - d`; empty until
    /// [`to_error_coordinates`] has run.
    pub fn errors(&self) -> &[Vec<f64>] {
        &self.errors
    }

    /// `|x_hat(k)|_inf` per round.
    pub fn error_sup(&self) -> &[f64] {
        &self.error_sup
    }

    pub fn updated(&self, k: usize, i: usize) -> bool {
        self.updated[k][i]
    }

    pub fn update_flags(&self) -> &[Vec<bool>] {
        &self.updated
    }

    /// Latest round `<= k` at which node `i` updated.
    pub fn last_update(&self, k: usize, i: usize) -> Option<usize> {
        match self.last_update[k][i] {
            NEVER => None,
            t => Some(t as usize),
        }
    }

    /// `q_i(k) = min { j >= 0 : i in U(k + 1 - j) }`.
    pub fn update_age(&self, k: usize, i: usize) -> Option<usize> {
        self.last_update(k + 1, i).map(|t| k + 1 - t)
    }

    pub fn constraining_node(&self, k: usize, i: usize) -> Option<usize> {
        match self.constraining[k][i] {
            NEVER => None,
            j => Some(j as usize),
        }
    }

    /// Round whose estimate of the constraining node was read.
    pub fn read_round(&self, k: usize, i: usize) -> Option<i64> {
        self.constraining_node(k, i)
            .map(|_| i64::from(self.read_time[k][i]))
    }

    /// `tau_hat_ij(k - 1)` for the recorded minimizer, for `k >= 1`.
    pub fn effective_delay(&self, k: usize, i: usize) -> Option<usize> {
        self.read_round(k, i).map(|t| (k as i64 - 1 - t) as usize)
    }

    /// `tau_hat_ij(k) = tau_ij(k - q_i(k)) + q_i(k)` for any neighbor `j`.
    pub fn composed_delay(&self, i: usize, nb: &Neighbor, k: usize) -> Option<usize> {
        let q = self.update_age(k, i)?;
        Some(self.delays.delay(k - q, nb.edge) + q)
    }

    /// `tau_ij(k)`.
    pub fn delay(&self, k: usize, edge: usize) -> usize {
        self.delays.delay(k, edge)
    }

    /// `w_ij(t)`, with rounds before 0 padded by round 0.
    pub fn perturbed_weight(&self, t: i64, i: usize, nb: &Neighbor) -> f64 {
        self.noise.weight(t, directed_index(nb.edge, i, nb.node))
    }

    /// `u_ij(t) = w_ij(t) - w_ij`.
    pub fn input(&self, t: i64, i: usize, nb: &Neighbor) -> f64 {
        self.noise.input(t, directed_index(nb.edge, i, nb.node))
    }

    /// Estimate with history padding: rounds before 0 read round 0.
    pub fn estimate_at(&self, t: i64, i: usize) -> f64 {
        self.estimates[t.max(0) as usize][i]
    }

    pub fn error_at(&self, t: i64, i: usize) -> f64 {
        self.errors[t.max(0) as usize][i]
    }

    pub fn input_sup_per_round(&self) -> &[f64] {
        &self.input_sup_per_round
    }

    /// Realized `||u_hat||_inf` over all generated rounds.
    pub fn input_sup_norm(&self) -> f64 {
        self.input_sup_norm
    }

    /// A-priori bound on `||u_hat||_inf` (the noise amplitude).
    pub fn input_bound(&self) -> f64 {
        self.input_bound
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            horizon: self.horizon,
            final_max_abs_error: self.error_sup.last().copied().unwrap_or(f64::NAN),
            input_sup_norm: self.input_sup_norm,
            input_bound: self.input_bound,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceSummary {
    pub horizon: usize,
    pub final_max_abs_error: f64,
    pub input_sup_norm: f64,
    pub input_bound: f64,
}

/// Tolerance for the error-coordinate recursion check.
const RECURSION_TOLERANCE: f64 = 1e-9;

/// Fills error rows and input norms, then checks that every recorded update
/// agrees with the error-coordinate recursion
/// `x_i = x_j(t) + u_ij(t) - d_i + d_j + w_ij` for its minimizer `j`.
pub fn to_error_coordinates(
    g: &WeightedGraph,
    mut trace: TrajectoryTrace,
    sc: &StructuralConstants,
) -> Result<TrajectoryTrace> {
    trace.fill_error_coordinates(sc)?;
    trace.check_recursion(g)?;
    Ok(trace)
}

impl TrajectoryTrace {
    /// Rebuilds a trace from recorded rows. Delay and noise processes are
    /// regenerated from the model, so only per-round records are needed.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_records(
        max_delay: usize,
        delta: usize,
        input_bound: f64,
        estimates: Vec<Vec<f64>>,
        updated: Vec<Vec<bool>>,
        constraining: Vec<Vec<u32>>,
        read_time: Vec<Vec<i32>>,
        delays: DelayProcess,
        noise: NoiseProcess,
        edge_count: usize,
    ) -> Self {
        let horizon = estimates.len() - 1;
        let n = estimates[0].len();
        let mut last_update = Vec::with_capacity(horizon + 1);
        let mut current = vec![NEVER; n];
        for row in &updated {
            for (i, &flag) in row.iter().enumerate() {
                if flag {
                    current[i] = last_update.len() as u32;
                }
            }
            last_update.push(current.clone());
        }
        let mut weights = vec![0.0; 2 * edge_count];
        let input_sup_per_round = (0..horizon)
            .map(|k| {
                noise.fill_row(k as i64, &mut weights);
                weights
                    .iter()
                    .zip(noise.nominal())
                    .fold(0.0_f64, |m, (w, w0)| m.max((w - w0).abs()))
            })
            .collect();
        Self {
            horizon,
            max_delay,
            delta,
            distances: vec![0.0; n],
            estimates,
            errors: Vec::new(),
            error_sup: Vec::new(),
            updated,
            last_update,
            constraining,
            read_time,
            input_sup_per_round,
            input_sup_norm: 0.0,
            input_bound,
            delays,
            noise,
        }
    }

    pub(crate) fn fill_error_coordinates(&mut self, sc: &StructuralConstants) -> Result<()> {
        let d = &sc.distances;
        if d.len() != self.node_count() {
            return Err(Error::Inconsistent(format!(
                "trace has {} nodes, constants have {}",
                self.node_count(),
                d.len()
            )));
        }
        self.distances = d.clone();
        let errors = self
            .estimates
            .iter()
            .map(|row| row.iter().zip(d).map(|(e, di)| e - di).collect())
            .collect();
        self.set_errors(errors);
        self.input_sup_norm = self.input_sup_per_round.iter().copied().fold(0.0, f64::max);
        Ok(())
    }

    /// Replaces the error rows, e.g. with values read back from a file.
    pub(crate) fn set_errors(&mut self, errors: Vec<Vec<f64>>) {
        self.error_sup = errors
            .iter()
            .map(|row: &Vec<f64>| row.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
            .collect();
        self.errors = errors;
    }

    pub(crate) fn check_recursion(&self, g: &WeightedGraph) -> Result<()> {
        let d = &self.distances;
        for k in 1..=self.horizon {
            for i in 0..self.node_count() {
                if g.is_source(i) {
                    if self.errors[k][i] != 0.0 {
                        return Err(Error::Inconsistent(format!(
                            "source {i} drifted to {} at round {k}",
                            self.estimates[k][i]
                        )));
                    }
                    continue;
                }
                if !self.updated[k][i] {
                    continue;
                }
                let j = self.constraining_node(k, i).ok_or_else(|| {
                    Error::Inconsistent(format!("node {i} updated at round {k} without a minimizer"))
                })?;
                let nb = g
                    .neighbors(i)
                    .iter()
                    .find(|nb| nb.node == j)
                    .ok_or_else(|| Error::Inconsistent(format!("{j} is not a neighbor of {i}")))?;
                let t = i64::from(self.read_time[k][i]);
                let predicted = self.error_at(t, j) + self.input(t, i, nb) - d[i] + d[j] + nb.weight;
                if (predicted - self.errors[k][i]).abs() > RECURSION_TOLERANCE {
                    return Err(Error::Inconsistent(format!(
                        "node {i} at round {k}: recursion gives {predicted}, trace has {}",
                        self.errors[k][i]
                    )));
                }
            }
        }
        Ok(())
    }
}
