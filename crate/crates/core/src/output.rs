//! Result files: the event timeline and step trace as CSV, the run summary
//! as TOML.

use crate::advancement::PairId;
use crate::simulator::{RunStats, SimEvent, StepOutcome, StepRecord};
use serde::Serialize;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EVENTS_FILE: &str = "events.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("cannot serialize summary: {0}")]
    Toml(#[from] toml::ser::Error),
}

pub fn format_pair(pair: Option<PairId>) -> String {
    match pair {
        Some((a, b)) => format!("{a}-{b}"),
        None => "*".to_string(),
    }
}

/// Streams events and trace rows, flushing after every step so an aborted
/// run leaves complete files behind.
pub struct CsvLog {
    events: csv::Writer<File>,
    trace: csv::Writer<File>,
    events_path: PathBuf,
    trace_path: PathBuf,
}

impl CsvLog {
    pub fn create(dir: &Path) -> Result<Self, OutputError> {
        std::fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
        let events_path = dir.join(EVENTS_FILE);
        let trace_path = dir.join(TRACE_FILE);
        let open = |p: &Path| csv::Writer::from_path(p).map_err(|source| OutputError::Csv { path: p.to_path_buf(), source });
        let mut log = Self { events: open(&events_path)?, trace: open(&trace_path)?, events_path, trace_path };
        log.events.write_record(["t", "kind", "pair", "detail"]).map_err(|e| log.events_err(e))?;
        log.trace.write_record(["t", "h", "branch", "min_dist", "energy"]).map_err(|e| log.trace_err(e))?;
        log.flush()?;
        Ok(log)
    }

    fn events_err(&self, source: csv::Error) -> OutputError {
        OutputError::Csv { path: self.events_path.clone(), source }
    }

    fn trace_err(&self, source: csv::Error) -> OutputError {
        OutputError::Csv { path: self.trace_path.clone(), source }
    }

    pub fn write_event(&mut self, e: &SimEvent) -> Result<(), OutputError> {
        let row = [e.time.to_string(), e.kind.to_string(), format_pair(e.pair), e.detail.clone()];
        self.events.write_record(&row).map_err(|err| self.events_err(err))
    }

    pub fn write_record(&mut self, r: &StepRecord) -> Result<(), OutputError> {
        let row = [
            r.time.to_string(),
            r.h.to_string(),
            r.branch.as_str().to_string(),
            r.min_distance.to_string(),
            r.energy.to_string(),
        ];
        self.trace.write_record(&row).map_err(|err| self.trace_err(err))
    }

    pub fn write_step(&mut self, out: &StepOutcome) -> Result<(), OutputError> {
        for e in &out.events {
            self.write_event(e)?;
        }
        self.write_record(&out.record)?;
        self.flush()
    }

    pub fn flush(&mut self) -> Result<(), OutputError> {
        self.events.flush().map_err(|source| OutputError::Io { path: self.events_path.clone(), source })?;
        self.trace.flush().map_err(|source| OutputError::Io { path: self.trace_path.clone(), source })
    }
}

#[derive(Debug, Clone, Serialize)]
struct Summary {
    steps: u64,
    safe_step_calls: u64,
    manifold_changes: u64,
    min_distance: f64,
    min_step: f64,
    mean_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_inter_event_time: Option<f64>,
    end_time: f64,
    quiescent: bool,
    histogram: Vec<Bucket>,
}

#[derive(Debug, Clone, Serialize)]
struct Bucket {
    lower: f64,
    upper: f64,
    count: u64,
}

/// The summary as TOML text.
pub fn summary_toml(stats: &RunStats) -> Result<String, OutputError> {
    let h = &stats.histogram;
    let summary = Summary {
        steps: stats.steps,
        safe_step_calls: stats.safe_step_calls,
        manifold_changes: stats.manifold_changes,
        min_distance: stats.min_distance,
        min_step: stats.min_step,
        mean_step: stats.mean_step,
        mean_inter_event_time: stats.mean_inter_event_time,
        end_time: stats.end_time,
        quiescent: stats.quiescent,
        histogram: (0..h.counts.len())
            .map(|k| Bucket { lower: h.lower_edge(k), upper: h.upper_edges[k], count: h.counts[k] })
            .collect(),
    };
    Ok(toml::to_string(&summary)?)
}

pub fn write_summary(dir: &Path, stats: &RunStats) -> Result<PathBuf, OutputError> {
    let path = dir.join(SUMMARY_FILE);
    let text = summary_toml(stats)?;
    let mut f = File::create(&path).map_err(|source| OutputError::Io { path: path.clone(), source })?;
    f.write_all(text.as_bytes()).map_err(|source| OutputError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes all three files at once.
pub fn emit_results(
    events: &[SimEvent],
    records: &[StepRecord],
    stats: &RunStats,
    dir: &Path,
) -> Result<(), OutputError> {
    let mut log = CsvLog::create(dir)?;
    for e in events {
        log.write_event(e)?;
    }
    for r in records {
        log.write_record(r)?;
    }
    log.flush()?;
    write_summary(dir, stats)?;
    Ok(())
}
