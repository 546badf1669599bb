//! Discrete-time time-delay systems and trajectory checks for
//! Razumikhin-type ISS Lyapunov inequalities and expISS envelopes.
//!
//! All gains are linear and represented by their slopes.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};

/// Outcome of a trajectory check, serialized as
/// `{check, pass, worst_slack, first_violation_k, params}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    /// Smallest `rhs - lhs` seen; negative means a violation.
    pub worst_slack: f64,
    pub first_violation_k: Option<usize>,
    pub params: serde_json::Value,
    pub evaluated: usize,
    pub violations: usize,
}

impl CheckReport {
    pub fn new(check: impl Into<String>, params: serde_json::Value) -> Self {
        Self {
            check: check.into(),
            pass: true,
            worst_slack: f64::INFINITY,
            first_violation_k: None,
            params,
            evaluated: 0,
            violations: 0,
        }
    }

    /// Records one inequality `lhs <= rhs` at step `k`.
    pub fn record(&mut self, k: usize, lhs: f64, rhs: f64, tolerance: f64) {
        let slack = rhs - lhs;
        self.evaluated += 1;
        if slack < self.worst_slack {
            self.worst_slack = slack;
        }
        if !(slack >= -tolerance) {
            self.violations += 1;
            self.pass = false;
            if self.first_violation_k.is_none() {
                self.first_violation_k = Some(k);
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        // infinite slack (nothing evaluated) is not representable in JSON
        if !self.worst_slack.is_finite() {
            v["worst_slack"] = serde_json::Value::Null;
        }
        v
    }
}

/// Per-state function `V`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateNorm {
    #[default]
    Sup,
    Euclidean,
    Sum,
}

impl StateNorm {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            StateNorm::Sup => x.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            StateNorm::Euclidean => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            StateNorm::Sum => x.iter().map(|v| v.abs()).sum(),
        }
    }
}

/// Shape of an interconnected delay system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DelaySystemSpec {
    pub state_dim: usize,
    pub partition: Vec<usize>,
    pub max_state_delay: usize,
    pub input_delay: usize,
    pub input_dim: usize,
}

impl DelaySystemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.partition.iter().sum::<usize>() != self.state_dim {
            return Err(Error::param(
                "partition",
                format!(
                    "block sizes sum to {}, state dimension is {}",
                    self.partition.iter().sum::<usize>(),
                    self.state_dim
                ),
            ));
        }
        if self.partition.contains(&0) {
            return Err(Error::param("partition", "empty subsystem block"));
        }
        Ok(())
    }

    /// Index ranges of the subsystem blocks.
    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        blocks(&self.partition)
    }
}

pub fn blocks(partition: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    partition
        .iter()
        .map(|&len| {
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// `x(k + 1) = G(x(k - tau), ..., x(k), u(k - d))`.
pub trait DelaySystem {
    fn spec(&self) -> &DelaySystemSpec;

    /// `window[0]` is `x(k - tau)`, `window[tau]` is `x(k)`.
    fn transition(&self, k: usize, window: &[&[f64]], input: &[f64]) -> Vec<f64>;
}

/// Checks `G(0, 0) = 0`.
pub fn is_zero_equilibrium<S: DelaySystem + ?Sized>(sys: &S) -> bool {
    let spec = sys.spec();
    let zero = vec![0.0; spec.state_dim];
    let window: Vec<&[f64]> = (0..=spec.max_state_delay).map(|_| zero.as_slice()).collect();
    let next = sys.transition(0, &window, &vec![0.0; spec.input_dim]);
    next.iter().all(|&v| v == 0.0)
}

/// Iterates a delay system. `initial` holds `x(-tau), ..., x(0)`; inputs
/// at negative times are zero. Returns `x(0), ..., x(steps)`.
pub fn simulate<S, F>(sys: &S, initial: &[Vec<f64>], input: F, steps: usize) -> Result<Vec<Vec<f64>>>
where
    S: DelaySystem + ?Sized,
    F: Fn(usize) -> Vec<f64>,
{
    let spec = sys.spec();
    let tau = spec.max_state_delay;
    if initial.len() != tau + 1 {
        return Err(Error::param(
            "initial",
            format!("need {} states, got {}", tau + 1, initial.len()),
        ));
    }
    let mut history: Vec<Vec<f64>> = initial.to_vec();
    for k in 0..steps {
        let len = history.len();
        let window: Vec<&[f64]> = history[len - tau - 1..].iter().map(Vec::as_slice).collect();
        let u = match k.checked_sub(spec.input_delay) {
            Some(t) => input(t),
            None => vec![0.0; spec.input_dim],
        };
        let next = sys.transition(k, &window, &u);
        history.push(next);
    }
    Ok(history.split_off(tau))
}

/// `x(k + 1) = sum_theta A_theta x(k - theta) + B u(k - d)`.
#[derive(Clone, Debug)]
pub struct LinearDelaySystem {
    spec: DelaySystemSpec,
    /// `state_matrices[theta]` multiplies `x(k - theta)`; row-major.
    pub state_matrices: Vec<Vec<f64>>,
    pub input_matrix: Vec<f64>,
}

impl LinearDelaySystem {
    pub fn new(spec: DelaySystemSpec, state_matrices: Vec<Vec<f64>>, input_matrix: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let n = spec.state_dim;
        if state_matrices.len() != spec.max_state_delay + 1
            || state_matrices.iter().any(|a| a.len() != n * n)
        {
            return Err(Error::param("state_matrices", "shape mismatch"));
        }
        if input_matrix.len() != n * spec.input_dim {
            return Err(Error::param("input_matrix", "shape mismatch"));
        }
        Ok(Self {
            spec,
            state_matrices,
            input_matrix,
        })
    }
}

impl DelaySystem for LinearDelaySystem {
    fn spec(&self) -> &DelaySystemSpec {
        &self.spec
    }

    fn transition(&self, _k: usize, window: &[&[f64]], input: &[f64]) -> Vec<f64> {
        let n = self.spec.state_dim;
        let m = self.spec.input_dim;
        let tau = self.spec.max_state_delay;
        let mut next = vec![0.0; n];
        for (theta, a) in self.state_matrices.iter().enumerate() {
            let x = window[tau - theta];
            for r in 0..n {
                next[r] += (0..n).map(|c| a[r * n + c] * x[c]).sum::<f64>();
            }
        }
        for r in 0..n {
            next[r] += (0..m).map(|c| self.input_matrix[r * m + c] * input[c]).sum::<f64>();
        }
        next
    }
}

/// Dissipative-form Razumikhin certificate with linear comparison functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RazumikhinCertificate {
    /// Look-back window `M`.
    pub window: usize,
    /// Contraction `kappa` in `[0, 1)`.
    pub contraction: f64,
    /// Slope of `lambda_u`.
    pub input_gain: f64,
    pub norm: StateNorm,
    /// Slopes of the sandwich `lower * |x| <= V(x) <= upper * |x|` against
    /// the sup norm.
    pub lower_slope: f64,
    pub upper_slope: f64,
}

impl RazumikhinCertificate {
    pub fn sup_norm(window: usize, contraction: f64, input_gain: f64) -> Self {
        Self {
            window,
            contraction,
            input_gain,
            norm: StateNorm::Sup,
            lower_slope: 1.0,
            upper_slope: 1.0,
        }
    }

    pub fn validate(&self, max_state_delay: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.contraction) {
            return Err(Error::param(
                "contraction",
                format!("must lie in [0, 1), got {}", self.contraction),
            ));
        }
        if self.window < max_state_delay {
            return Err(Error::param(
                "window",
                format!("must be >= max delay {max_state_delay}, got {}", self.window),
            ));
        }
        if !(self.input_gain >= 0.0) {
            return Err(Error::param("input_gain", "must be >= 0"));
        }
        if !(self.lower_slope > 0.0 && self.upper_slope >= self.lower_slope) {
            return Err(Error::param("lower_slope", "need 0 < lower <= upper"));
        }
        Ok(())
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "window": self.window,
            "kappa": self.contraction,
            "input_gain": self.input_gain,
            "norm": self.norm,
        })
    }
}

/// Checks `V(x(k+1)) <= kappa * max_{theta in [k-M, k]} V(x(theta)) + lambda_u * ||u||`
/// for every `k >= start_k`.
pub fn check_razumikhin(
    states: &[Vec<f64>],
    input_norm: f64,
    cert: &RazumikhinCertificate,
    start_k: usize,
    tolerance: f64,
) -> CheckReport {
    let values: Vec<f64> = states.iter().map(|x| cert.norm.eval(x)).collect();
    check_razumikhin_values(&values, input_norm, cert, start_k, tolerance)
}

/// [`check_razumikhin`] on precomputed `V(x(k))`.
pub fn check_razumikhin_values(
    values: &[f64],
    input_norm: f64,
    cert: &RazumikhinCertificate,
    start_k: usize,
    tolerance: f64,
) -> CheckReport {
    let mut params = cert.params();
    params["start_k"] = json!(start_k);
    params["input_norm"] = json!(input_norm);
    let mut report = CheckReport::new("razumikhin", params);
    let start = start_k.max(cert.window);
    let input_term = cert.input_gain * input_norm;
    for k in start..values.len().saturating_sub(1) {
        let window_max = values[k - cert.window..=k]
            .iter()
            .copied()
            .fold(0.0, f64::max);
        report.record(k, values[k + 1], cert.contraction * window_max + input_term, tolerance);
    }
    report
}

/// Checks the sandwich bound `lower * |x|_inf <= V(x) <= upper * |x|_inf`.
pub fn check_norm_sandwich(states: &[Vec<f64>], cert: &RazumikhinCertificate, tolerance: f64) -> CheckReport {
    let mut report = CheckReport::new(
        "norm_sandwich",
        json!({"lower": cert.lower_slope, "upper": cert.upper_slope, "norm": cert.norm}),
    );
    for (k, x) in states.iter().enumerate() {
        let v = cert.norm.eval(x);
        let sup = StateNorm::Sup.eval(x);
        report.record(k, cert.lower_slope * sup, v, tolerance);
        report.record(k, v, cert.upper_slope * sup, tolerance);
    }
    report
}

/// `|x(k)| <= p * rho^k * |xi| + lambda(|u|)` with a linear `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpIssEnvelope {
    pub overshoot: f64,
    pub rate: f64,
    pub input_gain: f64,
}

impl ExpIssEnvelope {
    pub fn validate(&self) -> Result<()> {
        if !(self.overshoot >= 1.0) {
            return Err(Error::param("overshoot", format!("must be >= 1, got {}", self.overshoot)));
        }
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::param("rate", format!("must lie in [0, 1), got {}", self.rate)));
        }
        if !(self.input_gain >= 0.0) {
            return Err(Error::param("input_gain", "must be >= 0"));
        }
        Ok(())
    }

    pub fn value(&self, k: usize, initial_norm: f64, input_norm: f64) -> f64 {
        self.overshoot * self.rate.powf(k as f64) * initial_norm + self.input_gain * input_norm
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeReport {
    #[serde(flatten)]
    pub report: CheckReport,
    /// Smallest `p >= 1` for which the envelope holds with the given rate
    /// and gain; infinite if none does.
    pub tightest_overshoot: f64,
}

/// Checks the expISS envelope on `|x(k)|` for `k >= from_k`. `initial_norm`
/// is `|xi|`, the norm of the initial window.
pub fn check_expiss_envelope_values(
    norms: &[f64],
    initial_norm: f64,
    input_norm: f64,
    env: &ExpIssEnvelope,
    from_k: usize,
    tolerance: f64,
) -> EnvelopeReport {
    let mut report = CheckReport::new(
        "expiss_envelope",
        json!({
            "overshoot": env.overshoot,
            "rate": env.rate,
            "input_gain": env.input_gain,
            "initial_norm": initial_norm,
            "input_norm": input_norm,
            "from_k": from_k,
        }),
    );
    let input_term = env.input_gain * input_norm;
    let mut tightest = 1.0_f64;
    for (k, &x) in norms.iter().enumerate().skip(from_k) {
        report.record(k, x, env.value(k, initial_norm, input_norm), tolerance);
        let excess = x - input_term;
        if excess > 0.0 {
            let scale = env.rate.powf(k as f64) * initial_norm;
            tightest = tightest.max(if scale > 0.0 { excess / scale } else { f64::INFINITY });
        }
    }
    EnvelopeReport {
        report,
        tightest_overshoot: tightest,
    }
}

/// Envelope check on state vectors; `initial_window` supplies `xi`.
pub fn check_expiss_envelope(
    states: &[Vec<f64>],
    initial_window: &[Vec<f64>],
    norm: StateNorm,
    input_norm: f64,
    env: &ExpIssEnvelope,
    from_k: usize,
    tolerance: f64,
) -> EnvelopeReport {
    let norms: Vec<f64> = states.iter().map(|x| norm.eval(x)).collect();
    let initial_norm = initial_window
        .iter()
        .map(|x| norm.eval(x))
        .fold(0.0, f64::max);
    check_expiss_envelope_values(&norms, initial_norm, input_norm, env, from_k, tolerance)
}

/// Options for [`per_subsystem_gains`].
pub struct GainOptions<'a> {
    pub window: usize,
    /// `lambda_iu` slope per subsystem.
    pub input_slopes: &'a [f64],
    pub input_norm: f64,
    /// Constraining subsystem `j` of `i` at step `k + 1`; when absent the
    /// maximizing subsystem over the window is used.
    pub constraining: Option<&'a (dyn Fn(usize, usize) -> Option<usize> + Sync)>,
    /// Restricts which `(i, k)` steps are evaluated.
    pub include: Option<&'a (dyn Fn(usize, usize) -> bool + Sync)>,
}

/// Smallest per-step slopes consistent with the subsystem Lyapunov estimate.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GainTable {
    /// Largest slope seen for each subsystem.
    pub per_subsystem: Vec<f64>,
    /// Largest slope per `(i, constraining j)`.
    pub per_pair: BTreeMap<(usize, usize), f64>,
    pub steps_evaluated: usize,
    /// Steps skipped because the relevant window was identically zero.
    pub skipped_degenerate: usize,
}

impl GainTable {
    pub fn max_slope(&self) -> f64 {
        self.per_subsystem.iter().copied().fold(0.0, f64::max)
    }
}

/// For each subsystem `i` and step `k >= window`, finds the smallest `a`
/// with `V_i(x_i(k+1)) <= a * max_{theta in [k-M, k]} V_j(x_j(theta)) + lambda_iu * ||u||`.
pub fn per_subsystem_gains(states: &[Vec<f64>], partition: &[usize], opts: &GainOptions<'_>) -> GainTable {
    let ranges = blocks(partition);
    let l = ranges.len();
    let v: Vec<Vec<f64>> = states
        .iter()
        .map(|x| ranges.iter().map(|r| StateNorm::Sup.eval(&x[r.clone()])).collect())
        .collect();
    let mut table = GainTable {
        per_subsystem: vec![0.0; l],
        ..GainTable::default()
    };
    let m = opts.window;
    for k in m..states.len().saturating_sub(1) {
        for i in 0..l {
            if let Some(include) = opts.include {
                if !include(i, k) {
                    continue;
                }
            }
            let lhs = v[k + 1][i] - opts.input_slopes[i] * opts.input_norm;
            let (j, denom) = match opts.constraining.and_then(|f| f(i, k)) {
                Some(j) => (j, (k - m..=k).map(|t| v[t][j]).fold(0.0, f64::max)),
                None => {
                    let mut best = (0, 0.0);
                    for t in k - m..=k {
                        for (j, &val) in v[t].iter().enumerate() {
                            if val > best.1 {
                                best = (j, val);
                            }
                        }
                    }
                    best
                }
            };
            if denom == 0.0 {
                table.skipped_degenerate += 1;
                continue;
            }
            table.steps_evaluated += 1;
            let slope = (lhs / denom).max(0.0);
            table.per_subsystem[i] = table.per_subsystem[i].max(slope);
            let entry = table.per_pair.entry((i, j)).or_insert(0.0);
            *entry = entry.max(slope);
        }
    }
    table
}
