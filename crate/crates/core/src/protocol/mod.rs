//! The biased min-consensus protocol, nominal and perturbed.
//!
//! Non-source nodes repeatedly set `d_hat_i <- min_j (d_hat_j + w_ij)` over
//! their neighbors while sources stay pinned at 0. The perturbed runner
//! layers bounded reciprocal delays, a windowed asynchronous schedule and
//! per-link weight noise on top, and records everything the stability
//! checks need.

pub mod checks;
pub mod kbound;
pub mod model;
pub mod trace;

use crate::error::{Error, Result};
use crate::graph::{StructuralConstants, WeightedGraph};

pub use kbound::{check_k_boundedness, check_k_boundedness_with, composite_map, KBoundReport, KBoundSample};
pub use model::{
    directed_index, DelayKind, DelayProcess, InitialCondition, NoiseModel, NoiseProcess,
    PerturbationModel, Scheduler,
};
pub use trace::{to_error_coordinates, TrajectoryTrace, TraceSummary};

use trace::NEVER;

/// One synchronous, delay-free, noise-free round.
pub fn step_nominal(g: &WeightedGraph, estimates: &[f64]) -> Vec<f64> {
    (0..g.node_count())
        .map(|i| {
            if g.is_source(i) {
                0.0
            } else {
                g.neighbors(i)
                    .iter()
                    .map(|nb| estimates[nb.node] + nb.weight)
                    .fold(f64::INFINITY, f64::min)
            }
        })
        .collect()
}

/// Runs the perturbed protocol with the initial condition drawn from the
/// model seed.
pub fn run_perturbed(
    g: &WeightedGraph,
    sc: &StructuralConstants,
    pm: &PerturbationModel,
    init: &InitialCondition,
    horizon: usize,
) -> Result<TrajectoryTrace> {
    let initial = init.resolve(g, sc, pm.seed)?;
    run_from(g, sc, pm, &initial, horizon)
}

/// Runs the perturbed protocol from explicit initial estimates.
///
/// Reads of rounds before 0 return the initial state (history padding).
/// Ties in the minimum go to the lowest neighbor index.
pub fn run_from(
    g: &WeightedGraph,
    sc: &StructuralConstants,
    pm: &PerturbationModel,
    initial: &[f64],
    horizon: usize,
) -> Result<TrajectoryTrace> {
    pm.validate(g)?;
    model::validate_initial(g, initial)?;
    let n = g.node_count();
    let delta = pm.delta();
    if horizon < pm.history_span() {
        return Err(Error::param(
            "horizon",
            format!(
                "must be at least delta + max_delay = {}, got {horizon}",
                pm.history_span()
            ),
        ));
    }
    if horizon > i32::MAX as usize {
        return Err(Error::param("horizon", "too large"));
    }

    let updated = pm.scheduler.realize(n, horizon, pm.seed);
    check_window(g, &updated, delta)?;

    let delays = pm.delay_process(g);
    let noise = pm.noise_process(g);
    let edge_count = g.edges().len();
    let ring = pm.max_delay + 1;
    let mut weight_rows = vec![vec![0.0; 2 * edge_count]; ring];
    let mut delay_row = vec![0u8; edge_count];

    let mut estimates = Vec::with_capacity(horizon + 1);
    estimates.push(initial.to_vec());
    let mut last_update = Vec::with_capacity(horizon + 1);
    last_update.push(vec![NEVER; n]);
    let mut constraining = Vec::with_capacity(horizon + 1);
    constraining.push(vec![NEVER; n]);
    let mut read_time = Vec::with_capacity(horizon + 1);
    read_time.push(vec![0i32; n]);
    let mut input_sup_per_round = Vec::with_capacity(horizon);

    for k in 0..horizon {
        let slot = k % ring;
        noise.fill_row(k as i64, &mut weight_rows[slot]);
        let nominal = noise.nominal();
        input_sup_per_round.push(
            weight_rows[slot]
                .iter()
                .zip(nominal)
                .fold(0.0_f64, |m, (w, w0)| m.max((w - w0).abs())),
        );
        delays.fill_row(k, &mut delay_row);

        let flags = &updated[k + 1];
        let prev = &estimates[k];
        let mut next = prev.clone();
        let mut lu = last_update[k].clone();
        let mut cons = constraining[k].clone();
        let mut rt = read_time[k].clone();
        for i in 0..n {
            if g.is_source(i) {
                next[i] = 0.0;
                continue;
            }
            if !flags[i] {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = NEVER;
            let mut arg_time = 0i64;
            for nb in g.neighbors(i) {
                let t = k as i64 - i64::from(delay_row[nb.edge]);
                // t >= k - max_delay, so the ring still holds round max(t, 0)
                let row = &weight_rows[(t.max(0) as usize) % ring];
                let value = estimates[t.max(0) as usize][nb.node]
                    + row[directed_index(nb.edge, i, nb.node)];
                if value < best {
                    best = value;
                    arg = nb.node as u32;
                    arg_time = t;
                }
            }
            next[i] = best;
            lu[i] = (k + 1) as u32;
            cons[i] = arg;
            rt[i] = arg_time as i32;
        }
        estimates.push(next);
        last_update.push(lu);
        constraining.push(cons);
        read_time.push(rt);
    }

    let trace = TrajectoryTrace {
        horizon,
        max_delay: pm.max_delay,
        delta,
        distances: sc.distances.clone(),
        estimates,
        errors: Vec::new(),
        error_sup: Vec::new(),
        updated,
        last_update,
        constraining,
        read_time,
        input_sup_per_round,
        input_sup_norm: 0.0,
        input_bound: pm.noise_amplitude(),
        delays,
        noise,
    };
    to_error_coordinates(g, trace, sc)
}

/// Every non-source appears in each window `U(k) .. U(k + delta)` that fits
/// inside the horizon.
fn check_window(g: &WeightedGraph, updated: &[Vec<bool>], delta: usize) -> Result<()> {
    for i in (0..g.node_count()).filter(|&i| !g.is_source(i)) {
        let mut last: Option<usize> = None;
        for (k, row) in updated.iter().enumerate() {
            if row[i] {
                last = Some(k);
            }
            // window [k - delta, k] must contain an update
            if k >= delta {
                let covered = last.is_some_and(|t| t + delta >= k);
                if !covered {
                    return Err(Error::ScheduleWindow {
                        round: k - delta,
                        node: i,
                        delta,
                    });
                }
            }
        }
    }
    Ok(())
}
