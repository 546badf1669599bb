//! On-disk formats: per-trial trace and summary CSVs plus the run metadata.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BoundParameters;
use crate::error::{Error, Result};
use crate::protocol::TrajectoryTrace;

use super::config::ExperimentConfig;

pub const METADATA_FILE: &str = "metadata.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub node: usize,
    pub estimate: f64,
    pub error: f64,
    pub updated: bool,
    pub constraining_node: Option<usize>,
    pub effective_delay: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub k: usize,
    pub max_abs_error: f64,
    pub bound: f64,
    pub log10_max_abs_error: f64,
}

/// Everything needed to rebuild and re-check a batch offline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: u32,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialMetadata>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub trial: usize,
    pub seed: u64,
    pub node_count: usize,
    pub edge_count: usize,
    pub max_distance: f64,
    pub bound: BoundParameters,
    /// `max_{k <= M} |x(k)|_inf`.
    pub initial_norm: f64,
    pub realized_input_norm: f64,
    pub final_max_abs_error: f64,
    /// Absent when the horizon does not reach past the window.
    pub final_bound: Option<f64>,
    pub graph_file: PathBuf,
    pub trace_file: PathBuf,
    pub summary_file: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::schema(path, format!("{kind:?}")),
    }
}

pub fn write_trace_csv(path: &Path, trace: &TrajectoryTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for k in 0..=trace.horizon() {
        for node in 0..trace.node_count() {
            let constraining_node = trace.constraining_node(k, node);
            let row = TraceRow {
                k,
                node,
                estimate: trace.estimates()[k][node],
                error: trace.errors()[k][node],
                updated: trace.updated(k, node),
                constraining_node,
                effective_delay: if k == 0 { None } else { trace.effective_delay(k, node) },
            };
            w.serialize(&row).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rows grouped by round, checked for a complete `k`-major, node-minor grid.
pub fn read_trace_csv(path: &Path, node_count: usize) -> Result<Vec<Vec<TraceRow>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let expected = ["k", "node", "estimate", "error", "updated", "constraining_node", "effective_delay"];
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::schema(
            path,
            format!("expected header `{}`, found `{}`", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rounds: Vec<Vec<TraceRow>> = Vec::new();
    for (line, row) in reader.deserialize::<TraceRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let (k, node) = (line / node_count, line % node_count);
        if row.k != k || row.node != node {
            return Err(Error::schema(
                path,
                format!("row {}: expected k = {k}, node = {node}, found k = {}, node = {}", line + 2, row.k, row.node),
            ));
        }
        if node == 0 {
            rounds.push(Vec::with_capacity(node_count));
        }
        rounds.last_mut().expect("round started").push(row);
    }
    if rounds.last().is_none_or(|r| r.len() != node_count) || rounds.len() < 2 {
        return Err(Error::schema(path, "incomplete trace: need full rows for rounds 0..=K with K >= 1"));
    }
    Ok(rounds)
}

pub fn summary_rows(error_sup: &[f64], bound: &[f64]) -> Vec<SummaryRow> {
    error_sup
        .iter()
        .zip(bound)
        .enumerate()
        .map(|(k, (&e, &b))| SummaryRow {
            k,
            max_abs_error: e,
            bound: b,
            log10_max_abs_error: e.log10(),
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()
        .map_err(|e| csv_error(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_metadata(dir: &Path) -> Result<Metadata> {
    let path = dir.join(METADATA_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Metadata = serde_json::from_str(&text).map_err(|e| Error::schema(&path, e.to_string()))?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::schema(
            &path,
            format!("unsupported format version {} (expected {FORMAT_VERSION})", meta.version),
        ));
    }
    Ok(meta)
}
