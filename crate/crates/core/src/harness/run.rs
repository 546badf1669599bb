//! Trial orchestration: simulate, verify, analyze, small-gain.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::bounds::{self, BoundParameters};
use crate::delay_core::{self, CheckReport};
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::graph::{StructuralConstants, WeightedGraph};
use crate::protocol::trace::NEVER;
use crate::protocol::{self, checks, PerturbationModel, TrajectoryTrace};
use crate::rng;
use crate::smallgain::{self, Certification, GainSystem, SmallGainMode};

use super::config::{CheckToggles, ExperimentConfig};
use super::io::{self, Metadata, TrialMetadata, FORMAT_VERSION, METADATA_FILE};

/// Tolerance for the per-step and window inequalities.
pub const STEP_TOLERANCE: f64 = 1e-12;

/// One simulated trial with everything derived from it.
#[derive(Clone, Debug)]
pub struct TrialRun {
    pub trial: usize,
    pub seed: u64,
    pub graph: WeightedGraph,
    pub constants: StructuralConstants,
    pub model: PerturbationModel,
    pub bounds: BoundParameters,
    pub trace: TrajectoryTrace,
}

impl TrialRun {
    pub fn bound_series(&self) -> Option<Vec<f64>> {
        bounds::bound_series(&self.bounds, &self.trace).ok()
    }
}

pub fn run_trial(config: &ExperimentConfig, trial: usize, seed: u64) -> Result<TrialRun> {
    let graph = config.graph.resolve(seed)?;
    let constants = StructuralConstants::compute(&graph)?;
    let model = config.model(seed);
    let bounds = bounds::bound_params(&constants, model.delta(), model.max_delay, model.noise_amplitude())?;
    let trace = protocol::run_perturbed(&graph, &constants, &model, &config.init, config.horizon)?;
    Ok(TrialRun {
        trial,
        seed,
        graph,
        constants,
        model,
        bounds,
        trace,
    })
}

pub fn run_trials(config: &ExperimentConfig, mode: Mode) -> Result<Vec<TrialRun>> {
    config.validate()?;
    let seeds = rng::trial_seeds(config.seed, config.trials);
    exec::map_indexed(mode, config.trials, |t| run_trial(config, t, seeds[t]))
        .into_iter()
        .collect()
}

fn kbound_report(report: &protocol::KBoundReport) -> CheckReport {
    let mut check = CheckReport::new(
        "k_bounded",
        json!({"samples": report.samples, "max_ratio": report.max_ratio}),
    );
    check.evaluated = report.samples;
    check.violations = report.violations;
    check.pass = report.pass();
    check.worst_slack = 1.0 - report.max_ratio;
    check.first_violation_k = report.first_violation.as_ref().map(|_| 0);
    check
}

/// Runs the enabled checks on one trace. Anchoring, schedule window and
/// delay composition always run.
pub fn run_checks(
    g: &WeightedGraph,
    sc: &StructuralConstants,
    pm: &PerturbationModel,
    bp: &BoundParameters,
    trace: &TrajectoryTrace,
    toggles: &CheckToggles,
    kbound_samples: usize,
) -> Result<Vec<CheckReport>> {
    let mut out = vec![
        checks::check_anchoring(g, trace),
        checks::check_schedule_window(g, trace),
        checks::check_delay_composition(g, trace),
    ];
    let realized = trace.input_sup_norm();
    if toggles.lemma1 {
        let report = checks::check_lemma1(g, sc, trace, realized, STEP_TOLERANCE);
        let mut lemma = report.lemma;
        lemma.params["minimizer_form_exceptions"] = json!(report.minimizer_form_exceptions);
        out.push(lemma);
        out.push(report.zeta_branch);
    }
    if toggles.lemma3_window {
        out.push(checks::check_lemma3_window(sc, trace, realized, STEP_TOLERANCE));
    }
    if toggles.razumikhin {
        out.push(delay_core::check_razumikhin_values(
            trace.error_sup(),
            realized,
            &bp.razumikhin(),
            bp.window,
            STEP_TOLERANCE,
        ));
    }
    if toggles.bound {
        let report = bounds::verify_bound(trace, bp)?;
        let mut check = report.report;
        check.params["max_utilization"] = json!(report.max_utilization);
        check.params["final_bound"] = json!(report.final_bound);
        check.params["realized_input_norm"] = json!(realized);
        out.push(check);
    }
    if toggles.expiss_envelope {
        let norms = trace.error_sup();
        let report = delay_core::check_expiss_envelope_values(
            norms,
            bounds::initial_norm(bp, norms),
            bp.input_norm_bound,
            &bp.envelope(),
            bp.first_asserted(),
            0.0,
        );
        let mut check = report.report;
        check.params["tightest_overshoot"] = json!(report.tightest_overshoot);
        out.push(check);
    }
    if toggles.k_bounded {
        let report = protocol::check_k_boundedness_with(g, sc, pm, kbound_samples, pm.seed, Mode::Sequential)?;
        out.push(kbound_report(&report));
    }
    Ok(out)
}

fn trial_dir(trial: usize) -> PathBuf {
    PathBuf::from(format!("trial_{trial:02}"))
}

/// Runs every trial and writes graph, trace and summary files per trial plus
/// `metadata.json`.
pub fn simulate(config: &ExperimentConfig, mode: Mode) -> Result<Metadata> {
    let runs = run_trials(config, mode)?;
    let out = &config.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let written: Vec<Result<TrialMetadata>> = exec::map_slice(mode, &runs, |run| {
        let dir = trial_dir(run.trial);
        let graph_file = dir.join("graph.json");
        let trace_file = dir.join("trace.csv");
        let summary_file = dir.join("summary.csv");
        std::fs::create_dir_all(out.join(&dir)).map_err(|e| Error::io(out.join(&dir), e))?;
        run.graph.save(&out.join(&graph_file))?;
        io::write_trace_csv(&out.join(&trace_file), &run.trace)?;
        let norms = run.trace.error_sup();
        let series = run.bound_series();
        let column = series.clone().unwrap_or_else(|| vec![f64::NAN; norms.len()]);
        io::write_summary_csv(&out.join(&summary_file), &io::summary_rows(norms, &column))?;
        Ok(TrialMetadata {
            trial: run.trial,
            seed: run.seed,
            node_count: run.graph.node_count(),
            edge_count: run.graph.edges().len(),
            max_distance: run.constants.max_distance(),
            bound: run.bounds,
            initial_norm: bounds::initial_norm(&run.bounds, norms),
            realized_input_norm: run.trace.input_sup_norm(),
            final_max_abs_error: *norms.last().expect("nonempty"),
            final_bound: series.and_then(|s| s.last().copied()),
            graph_file,
            trace_file,
            summary_file,
        })
    });
    let meta = Metadata {
        version: FORMAT_VERSION,
        config: config.clone(),
        trials: written.into_iter().collect::<Result<_>>()?,
    };
    io::write_json(&out.join(METADATA_FILE), &meta)?;
    Ok(meta)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialVerification {
    pub trial: usize,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub trials: Vec<TrialVerification>,
}

fn failed(name: &str, message: String) -> CheckReport {
    let mut check = CheckReport::new(name, json!({"message": message}));
    check.record(0, 1.0, 0.0, 0.0);
    check
}

fn passed(name: &str, evaluated: usize) -> CheckReport {
    let mut check = CheckReport::new(name, json!({}));
    check.evaluated = evaluated;
    check.worst_slack = 0.0;
    check
}

/// Rebuilds a trace from its CSV and the seeded processes, checks it
/// against the protocol, then runs the configured checks on the recorded
/// errors.
fn verify_trial(
    dir: &Path,
    config: &ExperimentConfig,
    trial: &TrialMetadata,
    toggles: &CheckToggles,
) -> Result<Vec<CheckReport>> {
    let g = WeightedGraph::load(&dir.join(&trial.graph_file))?;
    let sc = StructuralConstants::compute(&g)?;
    let pm = config.model(trial.seed);
    pm.validate(&g)?;
    let bp = bounds::bound_params(&sc, pm.delta(), pm.max_delay, pm.noise_amplitude())?;
    let trace_path = dir.join(&trial.trace_file);
    let rows = io::read_trace_csv(&trace_path, g.node_count())?;
    let n = g.node_count();

    let mut estimates = Vec::with_capacity(rows.len());
    let mut recorded_errors = Vec::with_capacity(rows.len());
    let mut updated = Vec::with_capacity(rows.len());
    let mut constraining = Vec::with_capacity(rows.len());
    let mut read_time = Vec::with_capacity(rows.len());
    for (k, round) in rows.iter().enumerate() {
        estimates.push(round.iter().map(|r| r.estimate).collect::<Vec<_>>());
        recorded_errors.push(round.iter().map(|r| r.error).collect::<Vec<_>>());
        updated.push(round.iter().map(|r| r.updated).collect::<Vec<_>>());
        constraining.push(
            round
                .iter()
                .map(|r| r.constraining_node.map_or(NEVER, |j| j as u32))
                .collect::<Vec<_>>(),
        );
        let mut times = Vec::with_capacity(n);
        for r in round {
            let t = match (r.constraining_node, r.effective_delay) {
                (Some(_), Some(tau)) if k >= 1 => k as i64 - 1 - tau as i64,
                (None, _) => 0,
                _ => {
                    return Err(Error::schema(
                        &trace_path,
                        format!("round {k}, node {}: constraining node without effective delay", r.node),
                    ))
                }
            };
            times.push(i32::try_from(t).map_err(|_| Error::schema(&trace_path, "effective delay out of range"))?);
        }
        read_time.push(times);
    }

    let mut out = Vec::new();
    let schedule = pm.scheduler.realize(n, rows.len() - 1, pm.seed);
    let mut replay = CheckReport::new("schedule_replay", json!({}));
    for (k, (a, b)) in schedule.iter().zip(&updated).enumerate() {
        replay.record(k, f64::from(u8::from(a != b)), 0.0, 0.0);
    }
    out.push(replay);

    let mut trace = TrajectoryTrace::from_records(
        pm.max_delay,
        pm.delta(),
        pm.noise_amplitude(),
        estimates,
        updated,
        constraining,
        read_time,
        pm.delay_process(&g),
        pm.noise_process(&g),
        g.edges().len(),
    );
    trace.fill_error_coordinates(&sc)?;
    out.push(match trace.check_recursion(&g) {
        Ok(()) => passed("recursion", rows.len()),
        Err(e) => failed("recursion", e.to_string()),
    });
    let mut column = CheckReport::new("error_column", json!({"tolerance": 1e-9}));
    for (k, (rec, computed)) in recorded_errors.iter().zip(trace.errors()).enumerate() {
        let worst = rec
            .iter()
            .zip(computed)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        column.record(k, worst, 0.0, 1e-9);
    }
    out.push(column);
    // remaining checks judge the errors as recorded in the file
    trace.set_errors(recorded_errors);

    if toggles.bound {
        let summary_path = dir.join(&trial.summary_file);
        let summary = io::read_summary_csv(&summary_path)?;
        let series = bounds::bound_series(&bp, &trace)?;
        if summary.len() != series.len() {
            return Err(Error::schema(&summary_path, format!("expected {} rows, found {}", series.len(), summary.len())));
        }
        let mut check = CheckReport::new("summary_bound", json!({"relative_tolerance": 1e-12}));
        for (row, b) in summary.iter().zip(&series) {
            check.record(row.k, (row.bound - b).abs(), 1e-12 * b.abs(), 0.0);
        }
        out.push(check);
    }
    out.extend(run_checks(&g, &sc, &pm, &bp, &trace, toggles, config.kbound_samples)?);
    Ok(out)
}

/// Verifies every trial listed in `dir/metadata.json`. Unreadable files
/// fail their trial with a message naming the file.
pub fn verify_dir(dir: &Path, toggles: Option<CheckToggles>, mode: Mode) -> Result<VerifyReport> {
    let meta = io::read_metadata(dir)?;
    let toggles = toggles.unwrap_or(meta.config.checks);
    let trials = exec::map_slice(mode, &meta.trials, |trial| {
        let checks = verify_trial(dir, &meta.config, trial, &toggles)
            .unwrap_or_else(|e| vec![failed("files", e.to_string())]);
        TrialVerification {
            trial: trial.trial,
            seed: trial.seed,
            pass: checks.iter().all(|c| c.pass),
            checks: checks.iter().map(CheckReport::to_json).collect(),
        }
    });
    Ok(VerifyReport {
        pass: trials.iter().all(|t| t.pass),
        trials,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StructuralReport {
    pub node_count: usize,
    pub edge_count: usize,
    pub sources: Vec<usize>,
    pub distances: Vec<f64>,
    pub constraining_sets: Vec<Vec<usize>>,
    pub zeta: f64,
    pub effective_diameter: usize,
    pub bound: BoundParameters,
}

pub fn analyze(g: &WeightedGraph, delta: usize, max_delay: usize, input_norm: f64) -> Result<StructuralReport> {
    let sc = StructuralConstants::compute(g)?;
    let bound = bounds::bound_params(&sc, delta, max_delay, input_norm)?;
    Ok(StructuralReport {
        node_count: g.node_count(),
        edge_count: g.edges().len(),
        sources: g.sources().to_vec(),
        distances: sc.distances,
        constraining_sets: sc.constraining_sets,
        zeta: sc.zeta,
        effective_diameter: sc.effective_diameter,
        bound,
    })
}

pub fn smallgain_file(path: &Path, mode: SmallGainMode) -> Result<Certification> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let gs = GainSystem::from_json(&text).map_err(|e| Error::schema(path, e.to_string()))?;
    smallgain::certify_with(&gs, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::GraphSource;
    use crate::protocol::{InitialCondition, NoiseModel, Scheduler};

    fn small_config(out: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            graph: GraphSource::Geometric {
                nodes: 25,
                width_km: 1.0,
                height_km: 1.0,
                radius_km: 0.4,
                weights: Default::default(),
            },
            max_delay: 1,
            delay: Default::default(),
            scheduler: Scheduler::GapUniform { min: 1, max: 2 },
            noise: NoiseModel::Uniform { amplitude: 0.01 },
            w_max: None,
            init: InitialCondition::UniformHalfdmax,
            horizon: 150,
            trials: 2,
            seed: 9,
            out,
            checks: CheckToggles::default(),
            kbound_samples: 200,
        }
    }

    #[test]
    fn simulate_then_verify() {
        let dir = std::env::temp_dir().join(format!("mcsim-run-{}", std::process::id()));
        let config = small_config(dir.clone());
        let meta = simulate(&config, Mode::Parallel).unwrap();
        assert_eq!(meta.trials.len(), 2);
        let report = verify_dir(&dir, None, Mode::Parallel).unwrap();
        assert!(report.pass, "{}", serde_json::to_string_pretty(&report).unwrap());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
