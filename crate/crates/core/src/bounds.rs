//! Closed-form exponential error bound for the perturbed protocol.
//!
//! With window `M = D (delta + max_delay) + D - 1`, rate `zb = zeta^(1/(M+1))`
//! and `|xi|` the largest error over rounds `0..=M`,
//!
//! ```text
//! b(k) = zb^k * zeta^(-M/(M+1)) * |xi| + lu * a,   lu = zb (D - 1) + D / (1 - zeta)
//! ```
//!
//! bounds `|x(k)|_inf` for every `k >= M + 1`, where `a` bounds the weight
//! noise.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::delay_core::{CheckReport, ExpIssEnvelope, RazumikhinCertificate};
use crate::error::{Error, Result};
use crate::graph::StructuralConstants;
use crate::protocol::TrajectoryTrace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParameters {
    pub zeta: f64,
    pub diameter: usize,
    pub delta: usize,
    pub max_delay: usize,
    pub window: usize,
    pub rate: f64,
    pub overshoot: f64,
    pub input_gain: f64,
    pub input_norm_bound: f64,
}

impl BoundParameters {
    pub fn new(zeta: f64, diameter: usize, delta: usize, max_delay: usize, input_norm: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(Error::param("zeta", format!("must lie in (0, 1), got {zeta}")));
        }
        if diameter == 0 {
            return Err(Error::param("diameter", "must be >= 1"));
        }
        if !(input_norm.is_finite() && input_norm >= 0.0) {
            return Err(Error::param("input_norm", format!("must be finite and >= 0, got {input_norm}")));
        }
        let window = diameter * (delta + max_delay) + diameter - 1;
        let m = window as f64;
        let rate = zeta.powf(1.0 / (m + 1.0));
        Ok(Self {
            zeta,
            diameter,
            delta,
            max_delay,
            window,
            rate,
            overshoot: zeta.powf(-m / (m + 1.0)),
            input_gain: rate * (diameter as f64 - 1.0) + diameter as f64 / (1.0 - zeta),
            input_norm_bound: input_norm,
        })
    }

    /// First round at which the bound is asserted.
    pub fn first_asserted(&self) -> usize {
        self.window + 1
    }

    /// `b(k)` for `k >= M + 1`; earlier rounds get the `k = M + 1` value.
    pub fn value(&self, k: usize, initial_norm: f64) -> f64 {
        let k = k.max(self.first_asserted());
        self.rate.powf(k as f64) * self.overshoot * initial_norm + self.input_gain * self.input_norm_bound
    }

    /// The same bound as an expISS envelope.
    pub fn envelope(&self) -> ExpIssEnvelope {
        ExpIssEnvelope {
            overshoot: self.overshoot,
            rate: self.rate,
            input_gain: self.input_gain,
        }
    }

    /// Sup-norm window certificate with `kappa = zeta`, `lambda_u = D`.
    pub fn razumikhin(&self) -> RazumikhinCertificate {
        RazumikhinCertificate::sup_norm(self.window, self.zeta, self.diameter as f64)
    }
}

pub fn bound_params(sc: &StructuralConstants, delta: usize, max_delay: usize, input_norm: f64) -> Result<BoundParameters> {
    BoundParameters::new(sc.zeta, sc.effective_diameter, delta, max_delay, input_norm)
}

/// `|xi|_inf = max_{l in [0, M]} |x(l)|_inf`.
pub fn initial_norm(bp: &BoundParameters, error_sup: &[f64]) -> f64 {
    error_sup.iter().take(bp.window + 1).copied().fold(0.0, f64::max)
}

/// `b(k)` for `k = 0..=K` from per-round sup errors.
pub fn bound_series_from_norms(bp: &BoundParameters, error_sup: &[f64]) -> Result<Vec<f64>> {
    if error_sup.len() <= bp.first_asserted() {
        return Err(Error::param(
            "horizon",
            format!("must exceed the window M = {}, got {}", bp.window, error_sup.len().saturating_sub(1)),
        ));
    }
    let xi = initial_norm(bp, error_sup);
    Ok((0..error_sup.len()).map(|k| bp.value(k, xi)).collect())
}

pub fn bound_series(bp: &BoundParameters, trace: &TrajectoryTrace) -> Result<Vec<f64>> {
    bound_series_from_norms(bp, trace.error_sup())
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    #[serde(flatten)]
    pub report: CheckReport,
    /// Largest `|x(k)| / b(k)` over asserted rounds.
    pub max_utilization: f64,
    pub final_bound: f64,
    pub realized_input_norm: Option<f64>,
}

/// Asserts `|x(k)|_inf <= b(k)` exactly for every `k >= M + 1`.
pub fn verify_bound_norms(error_sup: &[f64], bp: &BoundParameters) -> Result<BoundReport> {
    let series = bound_series_from_norms(bp, error_sup)?;
    let mut report = CheckReport::new(
        "bound",
        json!({
            "window": bp.window,
            "rate": bp.rate,
            "overshoot": bp.overshoot,
            "input_gain": bp.input_gain,
            "input_norm_bound": bp.input_norm_bound,
            "initial_norm": initial_norm(bp, error_sup),
        }),
    );
    let mut utilization = 0.0_f64;
    for k in bp.first_asserted()..error_sup.len() {
        report.record(k, error_sup[k], series[k], 0.0);
        if series[k] > 0.0 {
            utilization = utilization.max(error_sup[k] / series[k]);
        } else if error_sup[k] > 0.0 {
            utilization = f64::INFINITY;
        }
    }
    Ok(BoundReport {
        report,
        max_utilization: utilization,
        final_bound: *series.last().expect("nonempty"),
        realized_input_norm: None,
    })
}

pub fn verify_bound(trace: &TrajectoryTrace, bp: &BoundParameters) -> Result<BoundReport> {
    let mut report = verify_bound_norms(trace.error_sup(), bp)?;
    report.realized_input_norm = Some(trace.input_sup_norm());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::reference;
    use crate::protocol::{run_perturbed, InitialCondition, NoiseModel, PerturbationModel, Scheduler};

    #[test]
    fn path_constants() {
        let bp = BoundParameters::new(0.5, 4, 0, 0, 0.0).unwrap();
        assert_eq!(bp.window, 3);
        assert!((bp.rate - 0.840_896_415_253_714_6).abs() < 1e-12);
        assert!((bp.overshoot - 1.681_792_830_507_429).abs() < 1e-12);
        let expected_gain = 0.5f64.powf(0.25) * 3.0 + 8.0;
        assert!((bp.input_gain - expected_gain).abs() < 1e-12);
        assert!((bp.input_gain - 10.5227).abs() < 1e-4);
    }

    #[test]
    fn single_hop_diameter() {
        let bp = BoundParameters::new(0.8, 1, 3, 2, 0.0).unwrap();
        assert_eq!(bp.window, 5);
        assert!((bp.input_gain - 5.0).abs() < 1e-12);
    }

    #[test]
    fn section_five_window() {
        assert_eq!(BoundParameters::new(0.9286, 14, 3, 2, 0.01).unwrap().window, 83);
    }

    #[test]
    fn rejects_bad_zeta() {
        assert!(BoundParameters::new(1.0, 3, 1, 1, 0.0).is_err());
        assert!(BoundParameters::new(0.0, 3, 1, 1, 0.0).is_err());
    }

    #[test]
    fn first_asserted_value() {
        let bp = BoundParameters::new(0.5, 4, 0, 0, 0.0).unwrap();
        let b4 = bp.value(4, 8.0);
        assert!((b4 - 0.5f64.powf(0.25) * 8.0).abs() < 1e-12);
        assert!((b4 - 6.727).abs() < 1e-3);
        assert_eq!(bp.value(0, 8.0), b4);
    }

    #[test]
    fn zero_initial_error_gives_zero_bound() {
        let bp = BoundParameters::new(0.5, 4, 0, 0, 0.0).unwrap();
        let series = bound_series_from_norms(&bp, &[0.0; 10]).unwrap();
        assert!(series.iter().all(|&b| b == 0.0));
        assert!(verify_bound_norms(&[0.0; 10], &bp).unwrap().report.pass);
    }

    #[test]
    fn series_decreases_towards_floor() {
        let bp = BoundParameters::new(0.5, 4, 1, 1, 0.01).unwrap();
        let series = bound_series_from_norms(&bp, &[3.0; 200]).unwrap();
        let first = bp.first_asserted();
        assert!(series[first..].windows(2).all(|w| w[1] < w[0]));
        let floor = bp.input_gain * 0.01;
        assert!(series[199] > floor && series[199] - floor < 1e-3);
    }

    #[test]
    fn short_horizon_rejected() {
        let bp = BoundParameters::new(0.5, 4, 0, 0, 0.0).unwrap();
        assert!(bound_series_from_norms(&bp, &[1.0; 4]).is_err());
        assert!(bound_series_from_norms(&bp, &[1.0; 5]).is_ok());
    }

    #[test]
    fn path_graph_bound_holds_across_seeds() {
        let g = reference::path4();
        let sc = StructuralConstants::compute(&g).unwrap();
        for seed in 0..10 {
            let pm = PerturbationModel {
                max_delay: 1,
                scheduler: Scheduler::synchronous(),
                noise: NoiseModel::Uniform { amplitude: 0.01 },
                seed,
                ..PerturbationModel::unperturbed()
            };
            let bp = bound_params(&sc, pm.delta(), pm.max_delay, 0.01).unwrap();
            assert_eq!(bp.window, 11);
            let trace = run_perturbed(&g, &sc, &pm, &InitialCondition::UniformHalfdmax, 200).unwrap();
            let report = verify_bound(&trace, &bp).unwrap();
            assert!(report.report.pass, "seed {seed}: {report:?}");
            let raz = crate::delay_core::check_razumikhin(trace.errors(), 0.01, &bp.razumikhin(), bp.window, 1e-12);
            assert!(raz.pass, "seed {seed}: {raz:?}");
        }
    }

    #[test]
    fn inflated_error_is_caught_at_its_round() {
        let bp = BoundParameters::new(0.5, 4, 0, 0, 0.0).unwrap();
        let mut norms = vec![1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        norms[6] = 5.0;
        let report = verify_bound_norms(&norms, &bp).unwrap();
        assert_eq!(report.report.first_violation_k, Some(6));
        assert_eq!(report.report.violations, 1);
    }
}
