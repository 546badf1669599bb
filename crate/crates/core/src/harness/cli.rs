use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::exec::Mode;
use crate::graph::WeightedGraph;
use crate::protocol::{NoiseModel, Scheduler};
use crate::rng;
use crate::smallgain::SmallGainMode;

use super::config::{CheckToggles, ExperimentConfig, GraphSource};
use super::io;
use super::run;

/// Environment variable supplying the seed when neither `--seed` nor a
/// config file sets one.
pub const SEED_ENV: &str = "MCSIM_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "mcsim", version, about = "Min-consensus shortest-path simulator and stability checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run seeded trials and write traces, summaries and metadata.
    Simulate(ExperimentArgs),
    /// Re-check the files written by `simulate`; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Print distances, constraining sets, zeta, effective diameter and
    /// bound parameters for a graph.
    Analyze(ExperimentArgs),
    /// Certify a linear gain matrix or print a violating cycle.
    Smallgain(SmallgainArgs),
}

/// Experiment settings; flags override values from `--config`, which in
/// turn override the experimental-section defaults.
#[derive(Debug, Default, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Graph JSON file used for every trial instead of a random geometric graph.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub width_km: Option<f64>,
    #[arg(long)]
    pub height_km: Option<f64>,
    #[arg(long)]
    pub radius_km: Option<f64>,
    #[arg(long)]
    pub max_delay: Option<usize>,
    #[arg(long)]
    pub sched_gap_min: Option<usize>,
    #[arg(long)]
    pub sched_gap_max: Option<usize>,
    #[arg(long)]
    pub noise_amplitude: Option<f64>,
    /// Horizon K in rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run trials on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Output directory of a `simulate` run.
    #[arg(long, conflicts_with = "config")]
    pub out: Option<PathBuf>,
    /// Config whose `out` directory is verified.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated checks to run instead of those in the metadata.
    #[arg(long, value_delimiter = ',')]
    pub checks: Option<Vec<String>>,
    /// Where to write the JSON report; defaults to `<out>/verify.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct SmallgainArgs {
    /// Gain JSON: `{"l": int, "slopes": [[..]], "input_slopes": [..]}`.
    #[arg(required_unless_present = "matrix")]
    pub file: Option<PathBuf>,
    #[arg(long, conflicts_with = "file")]
    pub matrix: Option<PathBuf>,
    /// Require every gain sequence, not only cycles, to compose below 1.
    #[arg(long)]
    pub strict_path: bool,
}

fn mode(sequential: bool) -> Mode {
    if sequential {
        Mode::Sequential
    } else {
        Mode::Parallel
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::param("seed", format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::section_five(env_seed()?.unwrap_or(DEFAULT_SEED)),
        };
        if let Some(path) = &self.graph {
            config.graph = GraphSource::File { path: path.clone() };
        }
        let geometric = [self.width_km, self.height_km, self.radius_km].iter().any(Option::is_some)
            || self.nodes.is_some();
        if geometric {
            if self.graph.is_some() {
                return Err(Error::param("graph", "cannot combine --graph with geometric flags"));
            }
            if matches!(config.graph, GraphSource::File { .. }) {
                config.graph = GraphSource::section_five();
            }
            if let GraphSource::Geometric {
                nodes,
                width_km,
                height_km,
                radius_km,
                ..
            } = &mut config.graph
            {
                *nodes = self.nodes.unwrap_or(*nodes);
                *width_km = self.width_km.unwrap_or(*width_km);
                *height_km = self.height_km.unwrap_or(*height_km);
                *radius_km = self.radius_km.unwrap_or(*radius_km);
            }
        }
        if let Some(max_delay) = self.max_delay {
            config.max_delay = max_delay;
        }
        if self.sched_gap_min.is_some() || self.sched_gap_max.is_some() {
            let (min, max) = match config.scheduler {
                Scheduler::GapUniform { min, max } => (min, max),
                Scheduler::Explicit { .. } => (1, 3),
            };
            config.scheduler = Scheduler::GapUniform {
                min: self.sched_gap_min.unwrap_or(min),
                max: self.sched_gap_max.unwrap_or(max),
            };
        }
        if let Some(a) = self.noise_amplitude {
            config.noise = if a == 0.0 {
                NoiseModel::None
            } else {
                NoiseModel::Uniform { amplitude: a }
            };
        }
        if let Some(rounds) = self.rounds {
            config.horizon = rounds;
        }
        if let Some(trials) = self.trials {
            config.trials = trials;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn simulate(args: &ExperimentArgs) -> Result<ExitCode> {
    let config = args.resolve()?;
    let meta = run::simulate(&config, mode(args.sequential))?;
    println!("trial  seed                  nodes  zeta    D   M    final_error  final_bound");
    for t in &meta.trials {
        println!(
            "{:<6} {:<21} {:<6} {:<7.4} {:<3} {:<4} {:<12.4e} {}",
            t.trial,
            t.seed,
            t.node_count,
            t.bound.zeta,
            t.bound.diameter,
            t.bound.window,
            t.final_max_abs_error,
            t.final_bound.map_or("n/a".to_string(), |b| format!("{b:.4}")),
        );
    }
    println!("wrote {}", config.out.join(io::METADATA_FILE).display());
    Ok(ExitCode::SUCCESS)
}

fn verify(args: &VerifyArgs) -> Result<ExitCode> {
    let dir = match (&args.out, &args.config) {
        (Some(dir), _) => dir.clone(),
        (None, Some(path)) => ExperimentConfig::load(path)?.out,
        (None, None) => PathBuf::from("out"),
    };
    let toggles = args.checks.as_deref().map(CheckToggles::only).transpose()?;
    let report = run::verify_dir(&dir, toggles, mode(args.sequential))?;
    let path = args.report.clone().unwrap_or_else(|| dir.join("verify.json"));
    io::write_json(&path, &report)?;
    for trial in &report.trials {
        let failed: Vec<&str> = trial
            .checks
            .iter()
            .filter(|c| c["pass"] == false)
            .filter_map(|c| c["check"].as_str())
            .collect();
        if failed.is_empty() {
            println!("trial {}: PASS ({} checks)", trial.trial, trial.checks.len());
        } else {
            println!("trial {}: FAIL ({})", trial.trial, failed.join(", "));
        }
    }
    println!("report: {}", path.display());
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn analyze(args: &ExperimentArgs) -> Result<ExitCode> {
    let config = args.resolve()?;
    let graph = match &config.graph {
        GraphSource::File { path } => WeightedGraph::load(path)?,
        source => source.resolve(rng::trial_seeds(config.seed, 1)[0])?,
    };
    let report = run::analyze(
        &graph,
        config.scheduler.window_bound(),
        config.max_delay,
        config.noise.amplitude(),
    )?;
    print_json(&report)?;
    Ok(ExitCode::SUCCESS)
}

fn smallgain(args: &SmallgainArgs) -> Result<ExitCode> {
    let path = args.file.as_ref().or(args.matrix.as_ref()).expect("clap requires a file");
    let mode = if args.strict_path {
        SmallGainMode::StrictPath
    } else {
        SmallGainMode::Cycle
    };
    print_json(&run::smallgain_file(path, mode)?)?;
    Ok(ExitCode::SUCCESS)
}

pub fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Verify(args) => verify(args),
        Command::Analyze(args) => analyze(args),
        Command::Smallgain(args) => smallgain(args),
    }
}

/// Entry point: exit 0 on success, 1 when verification fails, 2 on errors.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
