//! Perturbation processes: delays, asynchronous schedules, weight noise,
//! and initial conditions.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{StructuralConstants, WeightedGraph};
use crate::rng::{self, stream, CounterTable};

/// Which nodes update at each round.
///
/// Round 0 holds the initial state, so `U(0)` is empty and the first update
/// happens at round 1 or later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheduler {
    /// Each node draws its first update round and every following gap
    /// uniformly from `{min, ..., max}`.
    GapUniform { min: usize, max: usize },
    /// `U(k) = rounds[(k - 1) % rounds.len()]` for `k >= 1`, with a declared
    /// window bound.
    Explicit {
        rounds: Vec<Vec<usize>>,
        window: usize,
    },
}

impl Scheduler {
    pub fn synchronous() -> Self {
        Scheduler::GapUniform { min: 1, max: 1 }
    }

    /// Hard bound `delta` with `U(k) u ... u U(k + delta) = N` for all `k >= 0`.
    ///
    /// For the gap scheduler this is `max`: a node may first update at round
    /// `max`, so the window starting at round 0 needs `max + 1` rounds.
    pub fn window_bound(&self) -> usize {
        match self {
            Scheduler::GapUniform { max, .. } => *max,
            Scheduler::Explicit { window, .. } => *window,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Scheduler::GapUniform { min, max } => {
                if *min == 0 || min > max {
                    return Err(Error::InvalidModel(format!(
                        "gap scheduler needs 1 <= min <= max, got {{{min}, {max}}}"
                    )));
                }
            }
            Scheduler::Explicit { rounds, .. } => {
                if rounds.is_empty() {
                    return Err(Error::InvalidModel("explicit schedule is empty".into()));
                }
                if let Some(&bad) = rounds.iter().flatten().find(|&&i| i >= n) {
                    return Err(Error::InvalidModel(format!(
                        "explicit schedule names node {bad} out of range"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Update flags for rounds `0..=horizon`.
    pub fn realize(&self, n: usize, horizon: usize, seed: u64) -> Vec<Vec<bool>> {
        let mut flags = vec![vec![false; n]; horizon + 1];
        match self {
            Scheduler::GapUniform { min, max } => {
                let mut rng = rng::stream_rng(seed, stream::SCHEDULE);
                let draw = |rng: &mut rand_chacha::ChaCha8Rng| rng.gen_range(*min..=*max);
                let mut next: Vec<usize> = (0..n).map(|_| draw(&mut rng)).collect();
                for (k, row) in flags.iter_mut().enumerate().skip(1) {
                    for i in 0..n {
                        if next[i] == k {
                            row[i] = true;
                            next[i] = k + draw(&mut rng);
                        }
                    }
                }
            }
            Scheduler::Explicit { rounds, .. } => {
                for (k, row) in flags.iter_mut().enumerate().skip(1) {
                    for &i in &rounds[(k - 1) % rounds.len()] {
                        row[i] = true;
                    }
                }
            }
        }
        flags
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKind {
    /// `tau_ij(k)` uniform on `{0, ..., max_delay}`.
    #[default]
    Uniform,
    /// `tau_ij(k) = max_delay` always.
    Constant,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    /// `w_ij(k)` uniform on `[w - a, w + a]` clipped to `(0, w_max]`.
    Uniform { amplitude: f64 },
}

impl NoiseModel {
    pub fn amplitude(&self) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::Uniform { amplitude } => *amplitude,
        }
    }
}

/// Delay process, schedule and weight noise for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationModel {
    pub max_delay: usize,
    #[serde(default)]
    pub delay: DelayKind,
    pub scheduler: Scheduler,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Upper bound on perturbed weights; defaults to `max w + amplitude`.
    #[serde(default)]
    pub w_max: Option<f64>,
    pub seed: u64,
}

impl PerturbationModel {
    /// No delay, synchronous updates, exact weights.
    pub fn unperturbed() -> Self {
        Self {
            max_delay: 0,
            delay: DelayKind::Uniform,
            scheduler: Scheduler::synchronous(),
            noise: NoiseModel::None,
            w_max: None,
            seed: 0,
        }
    }

    pub fn delta(&self) -> usize {
        self.scheduler.window_bound()
    }

    /// `delta + max_delay`, the bound on the composed delay.
    pub fn history_span(&self) -> usize {
        self.delta() + self.max_delay
    }

    pub fn noise_amplitude(&self) -> f64 {
        self.noise.amplitude()
    }

    pub fn validate(&self, g: &WeightedGraph) -> Result<()> {
        self.scheduler.validate(g.node_count())?;
        if self.max_delay > u8::MAX as usize {
            return Err(Error::InvalidModel(format!(
                "max_delay {} exceeds {}",
                self.max_delay,
                u8::MAX
            )));
        }
        let a = self.noise_amplitude();
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidModel(format!("noise amplitude {a} must be >= 0")));
        }
        if a >= g.min_weight() {
            return Err(Error::InvalidModel(format!(
                "noise amplitude {a} admits non-positive weights (min nominal weight {})",
                g.min_weight()
            )));
        }
        if let Some(w_max) = self.w_max {
            if !(w_max >= g.max_weight()) {
                return Err(Error::InvalidModel(format!(
                    "w_max {w_max} is below the largest nominal weight {}",
                    g.max_weight()
                )));
            }
        }
        Ok(())
    }

    pub fn delay_process(&self, g: &WeightedGraph) -> DelayProcess {
        DelayProcess {
            table: CounterTable::new(self.seed, stream::DELAY, g.edges().len()),
            max_delay: self.max_delay,
            kind: self.delay,
        }
    }

    pub fn noise_process(&self, g: &WeightedGraph) -> NoiseProcess {
        let amplitude = self.noise_amplitude();
        let w_max = self.w_max.unwrap_or(g.max_weight() + amplitude);
        let mut low = Vec::with_capacity(2 * g.edges().len());
        let mut span = Vec::with_capacity(2 * g.edges().len());
        let mut nominal = Vec::with_capacity(2 * g.edges().len());
        for e in g.edges() {
            let lo = e.weight - amplitude;
            let hi = (e.weight + amplitude).min(w_max);
            for _ in 0..2 {
                low.push(lo);
                span.push(hi - lo);
                nominal.push(e.weight);
            }
        }
        NoiseProcess {
            table: CounterTable::new(self.seed, stream::NOISE, 2 * g.edges().len()),
            noisy: amplitude > 0.0,
            low,
            span,
            nominal,
        }
    }
}

/// Index of the directed link `i -> j` along undirected edge `edge`, where
/// `i` is the reading node.
#[inline]
pub fn directed_index(edge: usize, i: usize, j: usize) -> usize {
    2 * edge + usize::from(i > j)
}

/// Counter-based delay draws, one per undirected edge per round, so
/// `tau_ij(k) = tau_ji(k)`.
#[derive(Clone, Debug)]
pub struct DelayProcess {
    table: CounterTable,
    max_delay: usize,
    kind: DelayKind,
}

impl DelayProcess {
    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// `tau(k)` for every edge.
    pub fn fill_row(&self, round: usize, out: &mut [u8]) {
        match (self.kind, self.max_delay) {
            (_, 0) => out.fill(0),
            (DelayKind::Constant, m) => out.fill(m as u8),
            (DelayKind::Uniform, m) => {
                let mut rng = self.table.row(round as u64);
                for slot in out.iter_mut() {
                    *slot = rng::below(rng.next_u64(), m as u64 + 1) as u8;
                }
            }
        }
    }

    pub fn delay(&self, round: usize, edge: usize) -> usize {
        match (self.kind, self.max_delay) {
            (_, 0) => 0,
            (DelayKind::Constant, m) => m,
            (DelayKind::Uniform, m) => {
                rng::below(self.table.get(round as u64, edge), m as u64 + 1) as usize
            }
        }
    }
}

/// Counter-based weight noise, one draw per directed link per round.
/// Rounds before 0 reuse round 0.
#[derive(Clone, Debug)]
pub struct NoiseProcess {
    table: CounterTable,
    noisy: bool,
    low: Vec<f64>,
    span: Vec<f64>,
    nominal: Vec<f64>,
}

impl NoiseProcess {
    pub fn fill_row(&self, round: i64, out: &mut [f64]) {
        if !self.noisy {
            out.copy_from_slice(&self.nominal);
            return;
        }
        let mut rng = self.table.row(round.max(0) as u64);
        for (idx, slot) in out.iter_mut().enumerate() {
            *slot = self.low[idx] + self.span[idx] * rng::unit_f64(rng.next_u64());
        }
    }

    /// `w_ij(t)` for directed link index `dir`.
    pub fn weight(&self, round: i64, dir: usize) -> f64 {
        if !self.noisy {
            return self.nominal[dir];
        }
        let bits = self.table.get(round.max(0) as u64, dir);
        self.low[dir] + self.span[dir] * rng::unit_f64(bits)
    }

    /// `u_ij(t) = w_ij(t) - w_ij`.
    pub fn input(&self, round: i64, dir: usize) -> f64 {
        self.weight(round, dir) - self.nominal[dir]
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }
}

/// Initial estimates `d_hat(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Non-sources uniform on `[0, d_max / 2]`.
    UniformHalfdmax,
    Explicit { values: Vec<f64> },
}

impl InitialCondition {
    pub fn resolve(
        &self,
        g: &WeightedGraph,
        sc: &StructuralConstants,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let n = g.node_count();
        let values = match self {
            InitialCondition::UniformHalfdmax => {
                let half = sc.max_distance() / 2.0;
                let mut rng = rng::stream_rng(seed, stream::INIT);
                (0..n)
                    .map(|i| {
                        let x = rng.gen::<f64>() * half;
                        if g.is_source(i) {
                            0.0
                        } else {
                            x
                        }
                    })
                    .collect()
            }
            InitialCondition::Explicit { values } => values.clone(),
        };
        validate_initial(g, &values)?;
        Ok(values)
    }
}

pub fn validate_initial(g: &WeightedGraph, values: &[f64]) -> Result<()> {
    if values.len() != g.node_count() {
        return Err(Error::InvalidInitial(format!(
            "expected {} values, got {}",
            g.node_count(),
            values.len()
        )));
    }
    for (i, &v) in values.iter().enumerate() {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidInitial(format!(
                "node {i} has initial estimate {v}; estimates must be finite and >= 0"
            )));
        }
        if g.is_source(i) && v != 0.0 {
            return Err(Error::InvalidInitial(format!(
                "source {i} must start at 0, got {v}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::reference;

    #[test]
    fn gap_scheduler_respects_window() {
        let sched = Scheduler::GapUniform { min: 1, max: 3 };
        let flags = sched.realize(20, 200, 9);
        assert!(flags[0].iter().all(|&f| !f));
        let delta = sched.window_bound();
        for k in 0..=200 - delta {
            for i in 0..20 {
                assert!((k..=k + delta).any(|t| flags[t][i]), "node {i} idle from {k}");
            }
        }
    }

    #[test]
    fn gap_scheduler_mean_gap_is_two() {
        let flags = Scheduler::GapUniform { min: 1, max: 3 }.realize(50, 4000, 3);
        let updates: usize = flags.iter().flatten().filter(|&&f| f).count();
        let mean_gap = (50.0 * 4000.0) / updates as f64;
        assert!((mean_gap - 2.0).abs() < 0.05, "mean gap {mean_gap}");
    }

    #[test]
    fn delays_are_bounded_and_reciprocal_by_construction() {
        let g = reference::diamond();
        let pm = PerturbationModel {
            max_delay: 2,
            ..PerturbationModel::unperturbed()
        };
        let dp = pm.delay_process(&g);
        let mut row = vec![0u8; g.edges().len()];
        for k in 0..50 {
            dp.fill_row(k, &mut row);
            for (e, &tau) in row.iter().enumerate() {
                assert!(tau <= 2);
                assert_eq!(tau as usize, dp.delay(k, e));
            }
        }
    }

    #[test]
    fn noise_stays_in_band() {
        let g = reference::path4();
        let pm = PerturbationModel {
            noise: NoiseModel::Uniform { amplitude: 0.01 },
            ..PerturbationModel::unperturbed()
        };
        let np = pm.noise_process(&g);
        let mut row = vec![0.0; 2 * g.edges().len()];
        for t in 0..100 {
            np.fill_row(t, &mut row);
            for (dir, &w) in row.iter().enumerate() {
                assert!(w > 0.0 && (w - 1.0).abs() <= 0.01);
                assert_eq!(w, np.weight(t, dir));
            }
        }
        assert_eq!(np.weight(-3, 1), np.weight(0, 1));
    }

    #[test]
    fn rejects_non_positive_weights() {
        let g = reference::path4();
        let pm = PerturbationModel {
            noise: NoiseModel::Uniform { amplitude: 1.0 },
            ..PerturbationModel::unperturbed()
        };
        assert!(pm.validate(&g).is_err());
    }

    #[test]
    fn initial_condition_rules() {
        let g = reference::path4();
        let sc = StructuralConstants::compute(&g).unwrap();
        let init = InitialCondition::UniformHalfdmax.resolve(&g, &sc, 5).unwrap();
        assert_eq!(init[0], 0.0);
        assert!(init.iter().all(|&x| (0.0..=1.5).contains(&x)));
        let bad = InitialCondition::Explicit {
            values: vec![1.0, 0.0, 0.0, 0.0],
        };
        assert!(bad.resolve(&g, &sc, 0).is_err());
        let neg = InitialCondition::Explicit {
            values: vec![0.0, -1.0, 0.0, 0.0],
        };
        assert!(neg.resolve(&g, &sc, 0).is_err());
    }

    #[test]
    fn model_json_shape() {
        let pm: PerturbationModel = serde_json::from_str(
            r#"{"max_delay": 2, "scheduler": {"kind": "gap_uniform", "min": 1, "max": 3},
                "noise": {"kind": "uniform", "amplitude": 0.01}, "seed": 4}"#,
        )
        .unwrap();
        assert_eq!(pm.delta(), 3);
        assert_eq!(pm.noise_amplitude(), 0.01);
        assert_eq!(pm.delay, DelayKind::Uniform);
    }
}
