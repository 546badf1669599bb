//! Trace-level checks of the per-node stability inequalities.

use serde::Serialize;
use serde_json::json;

use crate::delay_core::CheckReport;
use crate::graph::{StructuralConstants, WeightedGraph};

use super::trace::TrajectoryTrace;

/// Per-step one-hop error inequality plus its zeta-scaled branch.
#[derive(Clone, Debug, Serialize)]
pub struct Lemma1Report {
    /// `|x_i(k+1)| <= |x_j(k - tau_hat_ij(k))| + ||u||` with `j` true
    /// constraining for nonnegative errors and the recorded minimizer
    /// otherwise.
    pub lemma: CheckReport,
    /// Negative errors whose minimizer is not truly constraining:
    /// `|x_i(k+1)| <= zeta * (|x_j(k - tau_hat_ij(k))| + ||u||)`.
    pub zeta_branch: CheckReport,
    /// Steps where the same inequality fails with the recorded minimizer
    /// in place of a true constraining node. Informational only.
    pub minimizer_form_exceptions: usize,
}

impl Lemma1Report {
    pub fn pass(&self) -> bool {
        self.lemma.pass && self.zeta_branch.pass
    }
}

/// Evaluates the one-hop inequality at every `k >= delta + max_delay` and
/// every non-source that has updated by round `k + 1`.
pub fn check_lemma1(
    g: &WeightedGraph,
    sc: &StructuralConstants,
    trace: &TrajectoryTrace,
    input_norm: f64,
    tolerance: f64,
) -> Lemma1Report {
    let params = json!({"input_norm": input_norm, "zeta": sc.zeta, "tolerance": tolerance});
    let mut lemma = CheckReport::new("lemma1", params.clone());
    let mut zeta_branch = CheckReport::new("lemma1_zeta_branch", params);
    let mut exceptions = 0;
    let start = trace.delta() + trace.max_delay();
    for k in start..trace.horizon() {
        for i in (0..trace.node_count()).filter(|&i| !g.is_source(i)) {
            let Some(j) = trace.constraining_node(k + 1, i) else {
                continue;
            };
            let x = trace.errors()[k + 1][i];
            let delayed = |nb| {
                let tau = trace.composed_delay(i, nb, k).expect("node has updated");
                trace.error_at(k as i64 - tau as i64, nb.node).abs()
            };
            let minimizer = g.neighbors(i).iter().find(|nb| nb.node == j).expect("neighbor");
            let via_minimizer = delayed(minimizer) + input_norm;
            if x >= 0.0 {
                for nb in g.neighbors(i).iter().filter(|nb| sc.is_true_constraining(i, nb.node)) {
                    lemma.record(k, x, delayed(nb) + input_norm, tolerance);
                }
                if x > via_minimizer + tolerance {
                    exceptions += 1;
                }
            } else {
                lemma.record(k, -x, via_minimizer, tolerance);
                if !sc.is_true_constraining(i, j) {
                    zeta_branch.record(k, -x, sc.zeta * via_minimizer, tolerance);
                }
            }
        }
    }
    Lemma1Report {
        lemma,
        zeta_branch,
        minimizer_form_exceptions: exceptions,
    }
}

/// Sup-norm window inequality
/// `|x(k+1)| <= zeta * max_{theta in [D-1, M]} |x(k - theta)| + D * ||u||`
/// for `k >= M`, with `M = D (delta + max_delay) + D - 1`.
pub fn check_lemma3_window(
    sc: &StructuralConstants,
    trace: &TrajectoryTrace,
    input_norm: f64,
    tolerance: f64,
) -> CheckReport {
    let diameter = sc.effective_diameter;
    let window = diameter * (trace.delta() + trace.max_delay()) + diameter - 1;
    let mut report = CheckReport::new(
        "lemma3_window",
        json!({"window": window, "zeta": sc.zeta, "diameter": diameter, "input_norm": input_norm}),
    );
    let sup = trace.error_sup();
    for k in window..trace.horizon() {
        let past = sup[k - window..=k + 1 - diameter].iter().copied().fold(0.0, f64::max);
        report.record(k, sup[k + 1], sc.zeta * past + diameter as f64 * input_norm, tolerance);
    }
    report
}

/// Recorded composed delays match `tau_ij(k - q_i(k)) + q_i(k)` and stay
/// within `delta + max_delay` once `k >= delta + max_delay`.
pub fn check_delay_composition(g: &WeightedGraph, trace: &TrajectoryTrace) -> CheckReport {
    let span = trace.delta() + trace.max_delay();
    let mut report = CheckReport::new("delay_composition", json!({"bound": span}));
    for k in 0..trace.horizon() {
        for i in (0..trace.node_count()).filter(|&i| !g.is_source(i)) {
            let (Some(j), Some(recorded)) = (trace.constraining_node(k + 1, i), trace.effective_delay(k + 1, i))
            else {
                continue;
            };
            let nb = g.neighbors(i).iter().find(|nb| nb.node == j).expect("neighbor");
            let composed = trace.composed_delay(i, nb, k).expect("node has updated");
            report.record(k, (recorded as f64 - composed as f64).abs(), 0.0, 0.0);
            if k >= span {
                report.record(k, composed as f64, span as f64, 0.0);
            }
        }
    }
    report
}

/// Every non-source updates in each window `U(k), ..., U(k + delta)` that
/// fits inside the recorded horizon.
pub fn check_schedule_window(g: &WeightedGraph, trace: &TrajectoryTrace) -> CheckReport {
    let delta = trace.delta();
    let flags = trace.update_flags();
    let mut report = CheckReport::new("schedule_window", json!({"delta": delta}));
    for k in 0..flags.len().saturating_sub(delta) {
        let missing = (0..trace.node_count())
            .filter(|&i| !g.is_source(i) && !flags[k..=k + delta].iter().any(|row| row[i]))
            .count();
        report.record(k, missing as f64, 0.0, 0.0);
    }
    report
}

/// Sources pinned at 0 and all estimates nonnegative.
pub fn check_anchoring(g: &WeightedGraph, trace: &TrajectoryTrace) -> CheckReport {
    let mut report = CheckReport::new("anchoring", json!({}));
    for (k, row) in trace.estimates().iter().enumerate() {
        let drift = g.sources().iter().fold(0.0_f64, |m, &s| m.max(row[s].abs()));
        report.record(k, drift, 0.0, 0.0);
        let lowest = row.iter().copied().fold(f64::INFINITY, f64::min);
        report.record(k, -lowest, 0.0, 0.0);
    }
    report
}
