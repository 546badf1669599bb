//! Small-gain certification for interconnections with linear gains.
//!
//! With slopes `L[i][j]` (subsystem `i` driven by `j`), the cycle condition
//! asks every directed cycle to have slope product below 1. When it holds we
//! build scalings `sigma` with `max_j L[i][j] * sigma_j / sigma_i <= kappa < 1`
//! from longest-path potentials on log-slopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{StructuralConstants, WeightedGraph};

/// Strictness margin on log-slopes: a cycle is infeasible when the log of
/// its geometric mean is `>= -LOG_TOLERANCE`.
pub const LOG_TOLERANCE: f64 = 1e-12;

/// `l x l` linear gain slopes plus input slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSystem {
    pub l: usize,
    pub slopes: Vec<Vec<f64>>,
    #[serde(default)]
    pub input_slopes: Vec<f64>,
}

impl GainSystem {
    pub fn new(slopes: Vec<Vec<f64>>, input_slopes: Vec<f64>) -> Result<Self> {
        let gs = Self {
            l: slopes.len(),
            slopes,
            input_slopes,
        };
        gs.validate()?;
        Ok(gs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slopes.len() != self.l || self.slopes.iter().any(|row| row.len() != self.l) {
            return Err(Error::param("slopes", format!("expected a {0} x {0} matrix", self.l)));
        }
        if !self.input_slopes.is_empty() && self.input_slopes.len() != self.l {
            return Err(Error::param(
                "input_slopes",
                format!("expected {} entries, got {}", self.l, self.input_slopes.len()),
            ));
        }
        let bad = |x: f64| !(x.is_finite() && x >= 0.0);
        if self.slopes.iter().flatten().copied().any(bad) || self.input_slopes.iter().copied().any(bad) {
            return Err(Error::param("slopes", "entries must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let gs: GainSystem = serde_json::from_str(text)?;
        gs.validate()?;
        Ok(gs)
    }

    /// `max_{i,j : L[i][j] > 0} L[i][j] * sigma_j / sigma_i`.
    pub fn scaled_gain(&self, sigma: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (i, row) in self.slopes.iter().enumerate() {
            for (j, &s) in row.iter().enumerate() {
                if s > 0.0 {
                    worst = worst.max(s * sigma[j] / sigma[i]);
                }
            }
        }
        worst
    }

    /// Slope product along `i_1 -> i_2 -> ... -> i_r -> i_1`.
    pub fn cycle_product(&self, cycle: &[usize]) -> f64 {
        (0..cycle.len())
            .map(|p| self.slopes[cycle[p]][cycle[(p + 1) % cycle.len()]])
            .product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallGainCertificate {
    pub sigma: Vec<f64>,
    pub kappa: f64,
    pub max_cycle_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityWitness {
    /// Node sequence; for cycles the last node links back to the first.
    pub infeasible_cycle: Vec<usize>,
    pub product: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Certification {
    Feasible(SmallGainCertificate),
    Infeasible(InfeasibilityWitness),
}

impl Certification {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Certification::Feasible(_))
    }

    pub fn certificate(&self) -> Option<&SmallGainCertificate> {
        match self {
            Certification::Feasible(c) => Some(c),
            Certification::Infeasible(_) => None,
        }
    }
}

/// Which sequences the small-gain condition quantifies over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallGainMode {
    /// Closed sequences only.
    #[default]
    Cycle,
    /// Every gain sequence, open or closed, must compose below identity.
    StrictPath,
}

struct KarpTable {
    best: Option<(f64, usize)>,
    pred: Vec<Vec<usize>>,
}

fn log_weight(s: f64) -> Option<f64> {
    (s > 0.0).then(|| s.ln())
}

/// Karp's maximum mean cycle on log-slopes, starting walks at every node.
fn karp(slopes: &[Vec<f64>]) -> KarpTable {
    let l = slopes.len();
    let mut dist = vec![vec![f64::NEG_INFINITY; l]; l + 1];
    let mut pred = vec![vec![usize::MAX; l]; l + 1];
    dist[0].fill(0.0);
    for k in 1..=l {
        for u in 0..l {
            let du = dist[k - 1][u];
            if du == f64::NEG_INFINITY {
                continue;
            }
            for v in 0..l {
                if let Some(w) = log_weight(slopes[u][v]) {
                    if du + w > dist[k][v] {
                        dist[k][v] = du + w;
                        pred[k][v] = u;
                    }
                }
            }
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for v in 0..l {
        let dn = dist[l][v];
        if dn == f64::NEG_INFINITY {
            continue;
        }
        let worst = (0..l)
            .filter(|&k| dist[k][v] > f64::NEG_INFINITY)
            .map(|k| (dn - dist[k][v]) / (l - k) as f64)
            .fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(b, _)| worst > b) {
            best = Some((worst, v));
        }
    }
    KarpTable { best, pred }
}

/// Largest geometric mean of slopes over all directed cycles; 0 when the
/// coupling graph is acyclic. Self-loops count as 1-cycles.
pub fn max_cycle_mean(slopes: &[Vec<f64>]) -> f64 {
    match karp(slopes).best {
        Some((log_mean, _)) => log_mean.exp(),
        None => 0.0,
    }
}

/// A cycle attaining the maximum cycle mean, read off the optimal
/// length-`l` walk of Karp's table.
pub fn critical_cycle(slopes: &[Vec<f64>]) -> Option<Vec<usize>> {
    let l = slopes.len();
    let table = karp(slopes);
    let (_, end) = table.best?;
    let mut walk = vec![end];
    let mut v = end;
    for k in (1..=l).rev() {
        v = table.pred[k][v];
        walk.push(v);
    }
    walk.reverse();
    // first repeated node closes a simple cycle
    let mut seen = vec![usize::MAX; l];
    for (pos, &node) in walk.iter().enumerate() {
        if seen[node] != usize::MAX {
            return Some(walk[seen[node]..pos].to_vec());
        }
        seen[node] = pos;
    }
    None
}

/// Longest-walk potentials `pi_i = max(0, max_j (a_ij + pi_j))` with
/// `a_ij = ln L[i][j] - shift`. Assumes no positive cycles after the shift.
fn potentials(slopes: &[Vec<f64>], shift: f64) -> Vec<f64> {
    let l = slopes.len();
    let mut pi = vec![0.0_f64; l];
    for _ in 0..l {
        let mut changed = false;
        for i in 0..l {
            for j in 0..l {
                if let Some(w) = log_weight(slopes[i][j]) {
                    let candidate = w - shift + pi[j];
                    if candidate > pi[i] {
                        pi[i] = candidate;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    pi
}

pub fn certify(gs: &GainSystem) -> Result<Certification> {
    certify_with(gs, SmallGainMode::Cycle)
}

pub fn certify_with(gs: &GainSystem, mode: SmallGainMode) -> Result<Certification> {
    gs.validate()?;
    let slopes = &gs.slopes;
    let mcm = max_cycle_mean(slopes);
    if mcm > 0.0 && mcm.ln() >= -LOG_TOLERANCE {
        let cycle = critical_cycle(slopes).expect("a cycle exists when the mean is positive");
        return Ok(Certification::Infeasible(InfeasibilityWitness {
            product: gs.cycle_product(&cycle),
            infeasible_cycle: cycle,
        }));
    }
    if mode == SmallGainMode::StrictPath {
        if let Some(witness) = open_path_witness(gs) {
            return Ok(Certification::Infeasible(witness));
        }
    }

    // Deflate by the cycle mean itself (optimal kappa); fall back to the
    // midpoint towards 1 if rounding pushes the achieved gain to 1.
    let targets = if mcm > 0.0 {
        vec![mcm, 0.5 * (mcm + 1.0)]
    } else {
        vec![0.5]
    };
    for gamma in targets {
        let pi = potentials(slopes, gamma.ln());
        let sigma: Vec<f64> = pi.iter().map(|p| p.exp()).collect();
        let kappa = gs.scaled_gain(&sigma);
        if kappa < 1.0 {
            return Ok(Certification::Feasible(SmallGainCertificate {
                sigma,
                kappa,
                max_cycle_mean: mcm,
            }));
        }
    }
    let cycle = critical_cycle(slopes).unwrap_or_default();
    Ok(Certification::Infeasible(InfeasibilityWitness {
        product: gs.cycle_product(&cycle),
        infeasible_cycle: cycle,
    }))
}

/// Open gain sequence with product >= 1, if any (all cycles already < 1).
fn open_path_witness(gs: &GainSystem) -> Option<InfeasibilityWitness> {
    let slopes = &gs.slopes;
    let l = gs.l;
    let pi = potentials(slopes, 0.0);
    let mut start = None;
    let mut best = f64::NEG_INFINITY;
    for i in 0..l {
        for j in 0..l {
            if let Some(w) = log_weight(slopes[i][j]) {
                if w + pi[j] > best {
                    best = w + pi[j];
                    start = Some((i, j));
                }
            }
        }
    }
    if best < -LOG_TOLERANCE {
        return None;
    }
    let (i, mut j) = start?;
    let mut path = vec![i, j];
    while pi[j] > 0.0 && path.len() <= l {
        let next = (0..l)
            .filter(|&t| slopes[j][t] > 0.0)
            .max_by(|&a, &b| {
                (slopes[j][a].ln() + pi[a]).total_cmp(&(slopes[j][b].ln() + pi[b]))
            })?;
        path.push(next);
        j = next;
    }
    let product = path.windows(2).map(|p| slopes[p[0]][p[1]]).product();
    Some(InfeasibilityWitness {
        infeasible_cycle: path,
        product,
    })
}

/// `V(xi) = max_i V_i(xi_i) / sigma_i`.
pub fn composite_lyapunov(cert: &SmallGainCertificate, subsystem_values: &[f64]) -> f64 {
    cert.sigma
        .iter()
        .zip(subsystem_values)
        .map(|(s, v)| v / s)
        .fold(0.0, f64::max)
}

/// Gain data of the consensus protocol over the effective-diameter window:
/// every non-source is driven by every node with slope at most `zeta` and by
/// the input with slope at most `D`. Sources have zero gains. The identity
/// scaling certifies it with `kappa = zeta`.
pub fn consensus_gain_system(
    g: &WeightedGraph,
    sc: &StructuralConstants,
) -> Result<(GainSystem, SmallGainCertificate)> {
    if !(sc.zeta > 0.0 && sc.zeta < 1.0) {
        return Err(Error::param("zeta", format!("must lie in (0, 1), got {}", sc.zeta)));
    }
    let n = g.node_count();
    let diameter = sc.effective_diameter as f64;
    let slopes: Vec<Vec<f64>> = (0..n)
        .map(|i| if g.is_source(i) { vec![0.0; n] } else { vec![sc.zeta; n] })
        .collect();
    let input_slopes = (0..n)
        .map(|i| if g.is_source(i) { 0.0 } else { diameter })
        .collect();
    let gs = GainSystem::new(slopes, input_slopes)?;
    let sigma = vec![1.0; n];
    let kappa = gs.scaled_gain(&sigma);
    debug_assert!(kappa <= sc.zeta);
    Ok((
        gs,
        SmallGainCertificate {
            sigma,
            kappa,
            max_cycle_mean: sc.zeta,
        },
    ))
}
