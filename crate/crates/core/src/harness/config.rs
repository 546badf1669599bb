use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_geometric, GeometricGraphSpec, WeightMode, WeightedGraph};
use crate::protocol::{DelayKind, InitialCondition, NoiseModel, PerturbationModel, Scheduler};

pub const DEFAULT_HORIZON: usize = 1000;
pub const DEFAULT_KBOUND_SAMPLES: usize = 2000;

/// Where each trial's graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    /// A fresh random geometric graph per trial, seeded by the trial seed.
    Geometric {
        nodes: usize,
        width_km: f64,
        height_km: f64,
        radius_km: f64,
        #[serde(default)]
        weights: WeightMode,
    },
    /// The same graph for every trial.
    File { path: PathBuf },
}

impl GraphSource {
    /// Settings of the experimental section: 500 nodes on 4 x 2 km with a
    /// 0.35 km radius and hop-count weights.
    pub fn section_five() -> Self {
        GraphSource::Geometric {
            nodes: 500,
            width_km: 4.0,
            height_km: 2.0,
            radius_km: 0.35,
            weights: WeightMode::HopCount,
        }
    }

    pub fn resolve(&self, seed: u64) -> Result<WeightedGraph> {
        match self {
            GraphSource::Geometric {
                nodes,
                width_km,
                height_km,
                radius_km,
                weights,
            } => generate_geometric(&GeometricGraphSpec {
                node_count: *nodes,
                area_width: *width_km,
                area_height: *height_km,
                radius: *radius_km,
                weight_mode: *weights,
                seed,
            }),
            GraphSource::File { path } => WeightedGraph::load(path),
        }
    }
}

fn yes() -> bool {
    true
}

/// Which verification checks run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckToggles {
    #[serde(default = "yes")]
    pub lemma1: bool,
    #[serde(default = "yes")]
    pub lemma3_window: bool,
    #[serde(default = "yes")]
    pub razumikhin: bool,
    #[serde(default = "yes")]
    pub bound: bool,
    #[serde(default = "yes")]
    pub k_bounded: bool,
    #[serde(default = "yes")]
    pub expiss_envelope: bool,
}

impl Default for CheckToggles {
    fn default() -> Self {
        Self {
            lemma1: true,
            lemma3_window: true,
            razumikhin: true,
            bound: true,
            k_bounded: true,
            expiss_envelope: true,
        }
    }
}

impl CheckToggles {
    pub const NAMES: [&'static str; 6] = [
        "lemma1",
        "lemma3_window",
        "razumikhin",
        "bound",
        "k_bounded",
        "expiss_envelope",
    ];

    /// Enables exactly the named checks.
    pub fn only(names: &[String]) -> Result<Self> {
        let mut t = Self {
            lemma1: false,
            lemma3_window: false,
            razumikhin: false,
            bound: false,
            k_bounded: false,
            expiss_envelope: false,
        };
        for name in names {
            match name.as_str() {
                "lemma1" => t.lemma1 = true,
                "lemma3_window" => t.lemma3_window = true,
                "razumikhin" => t.razumikhin = true,
                "bound" => t.bound = true,
                "k_bounded" => t.k_bounded = true,
                "expiss_envelope" => t.expiss_envelope = true,
                other => {
                    return Err(Error::param(
                        "checks",
                        format!("unknown check `{other}`; expected one of {}", Self::NAMES.join(", ")),
                    ))
                }
            }
        }
        Ok(t)
    }
}

/// A batch of seeded trials plus the checks to run on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub max_delay: usize,
    #[serde(default)]
    pub delay: DelayKind,
    pub scheduler: Scheduler,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub w_max: Option<f64>,
    pub init: InitialCondition,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub checks: CheckToggles,
    #[serde(default = "default_kbound_samples")]
    pub kbound_samples: usize,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

fn default_trials() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_kbound_samples() -> usize {
    DEFAULT_KBOUND_SAMPLES
}

impl ExperimentConfig {
    /// The experimental section's setup: delays up to 2 rounds, update gaps
    /// uniform on {1, 2, 3}, weights uniform on [0.99, 1.01], initial
    /// estimates uniform on [0, d_max / 2], 5 trials.
    pub fn section_five(seed: u64) -> Self {
        Self {
            graph: GraphSource::section_five(),
            max_delay: 2,
            delay: DelayKind::Uniform,
            scheduler: Scheduler::GapUniform { min: 1, max: 3 },
            noise: NoiseModel::Uniform { amplitude: 0.01 },
            w_max: None,
            init: InitialCondition::UniformHalfdmax,
            horizon: DEFAULT_HORIZON,
            trials: 5,
            seed,
            out: default_out(),
            checks: CheckToggles::default(),
            kbound_samples: DEFAULT_KBOUND_SAMPLES,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if self.horizon < self.max_delay + self.scheduler.window_bound() {
            return Err(Error::param(
                "horizon",
                format!(
                    "must be at least delta + max_delay = {}",
                    self.max_delay + self.scheduler.window_bound()
                ),
            ));
        }
        if let GraphSource::Geometric {
            nodes,
            width_km,
            height_km,
            radius_km,
            ..
        } = &self.graph
        {
            GeometricGraphSpec {
                node_count: *nodes,
                area_width: *width_km,
                area_height: *height_km,
                radius: *radius_km,
                weight_mode: WeightMode::HopCount,
                seed: 0,
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn model(&self, seed: u64) -> PerturbationModel {
        PerturbationModel {
            max_delay: self.max_delay,
            delay: self.delay,
            scheduler: self.scheduler.clone(),
            noise: self.noise,
            w_max: self.w_max,
            seed,
        }
    }
}
