//! `records.csv`, `summary.json` and `timing.json`.
//!
//! The CSV has one row per slot per trial, ordered by trial then slot. Slot columns come
//! first, then one block of user columns per user with the user index as suffix.
//! Floats are written in their shortest round-trip form; a missing value is an empty cell.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use swipt_core::record::{SlotFlags, SlotRecord, UserRecord};
use thiserror::Error;

use crate::summary::{ExperimentSummary, TimingSummary};

pub const SLOT_COLUMNS: [&str; 8] = ["trial", "slot", "tx_power", "objective", "iterations", "eigen_ratio", "kkt_residual", "flags"];
pub const USER_COLUMNS: [&str; 9] =
    ["queue", "virtual_queue", "battery", "arrival", "ps_ratio", "sinr", "harvest", "rate", "energy_used"];

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("header: {0}")]
    Header(String),
    #[error("row {row}, column {column}: cannot parse `{value}`")]
    Cell { row: usize, column: String, value: String },
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Records { path: PathBuf, source: RecordError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// Shortest round-trip text, switching to exponent form for very large or small magnitudes.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn header(num_users: usize) -> Vec<String> {
    let mut h: Vec<String> = SLOT_COLUMNS.iter().map(|c| c.to_string()).collect();
    for k in 0..num_users {
        h.extend(USER_COLUMNS.iter().map(|c| format!("{c}_{k}")));
    }
    h
}

fn user_fields(u: &UserRecord) -> [f64; 9] {
    [u.queue, u.virtual_queue, u.battery, u.arrival, u.ps_ratio, u.sinr, u.harvest, u.rate, u.energy_used]
}

fn user_from_fields(f: &[f64]) -> UserRecord {
    UserRecord {
        queue: f[0],
        virtual_queue: f[1],
        battery: f[2],
        arrival: f[3],
        ps_ratio: f[4],
        sinr: f[5],
        harvest: f[6],
        rate: f[7],
        energy_used: f[8],
    }
}

/// Writes the records; wall time is not exported.
pub fn write_records<W: Write>(out: W, records: &[SlotRecord], num_users: usize) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(num_users))?;
    let opt = |x: Option<f64>| x.map(format_float).unwrap_or_default();
    for r in records {
        let mut row = vec![
            r.trial.to_string(),
            r.slot.to_string(),
            format_float(r.tx_power),
            format_float(r.objective),
            r.iterations.to_string(),
            opt(r.eigen_ratio),
            opt(r.kkt_residual),
            r.flags.to_text(),
        ];
        for u in &r.users {
            row.extend(user_fields(u).into_iter().map(format_float));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads records written by [`write_records`]. Wall times come back as zero.
pub fn read_records<R: Read>(input: R) -> Result<Vec<SlotRecord>, RecordError> {
    let mut r = csv::Reader::from_reader(input);
    let head = r.headers()?.clone();
    let user_cols = head.len().checked_sub(SLOT_COLUMNS.len()).unwrap_or(usize::MAX);
    if user_cols == usize::MAX || user_cols % USER_COLUMNS.len() != 0 {
        return Err(RecordError::Header(format!("{} columns do not fit the layout", head.len())));
    }
    let num_users = user_cols / USER_COLUMNS.len();
    let expected = header(num_users);
    if head.iter().ne(expected.iter().map(String::as_str)) {
        return Err(RecordError::Header("column names or order differ from the documented layout".into()));
    }
    let mut records = Vec::new();
    for (row, line) in r.records().enumerate() {
        let line = line?;
        let bad = |c: usize| RecordError::Cell { row, column: expected[c].clone(), value: line[c].to_string() };
        let float = |c: usize| line[c].parse::<f64>().map_err(|_| bad(c));
        let int = |c: usize| line[c].parse::<usize>().map_err(|_| bad(c));
        let opt = |c: usize| if line[c].is_empty() { Ok(None) } else { float(c).map(Some) };
        let mut users = Vec::with_capacity(num_users);
        for k in 0..num_users {
            let base = SLOT_COLUMNS.len() + k * USER_COLUMNS.len();
            let fields = (base..base + USER_COLUMNS.len()).map(float).collect::<Result<Vec<_>, _>>()?;
            users.push(user_from_fields(&fields));
        }
        records.push(SlotRecord {
            trial: int(0)?,
            slot: int(1)?,
            users,
            tx_power: float(2)?,
            objective: float(3)?,
            iterations: int(4)?,
            wall_time: 0.0,
            eigen_ratio: opt(5)?,
            kkt_residual: opt(6)?,
            flags: SlotFlags::from_text(&line[7]).map_err(|_| bad(7))?,
        });
    }
    Ok(records)
}

fn create(path: &Path) -> Result<BufWriter<File>, ExportError> {
    File::create(path).map(BufWriter::new).map_err(|source| ExportError::Io { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExportError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| ExportError::Json { path: path.into(), source })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|source| ExportError::Io { path: path.into(), source })
}

pub fn read_summary(path: &Path) -> Result<ExperimentSummary, ExportError> {
    let f = File::open(path).map_err(|source| ExportError::Io { path: path.into(), source })?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|source| ExportError::Json { path: path.into(), source })
}

pub fn load_records(path: &Path) -> Result<Vec<SlotRecord>, ExportError> {
    let f = File::open(path).map_err(|source| ExportError::Io { path: path.into(), source })?;
    read_records(std::io::BufReader::new(f)).map_err(|source| ExportError::Records { path: path.into(), source })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputPaths {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub timing: PathBuf,
}

/// Writes the three output files into `dir`, creating it if needed.
pub fn export(dir: &Path, records: &[SlotRecord], summary: &ExperimentSummary, timing: &TimingSummary) -> Result<OutputPaths, ExportError> {
    std::fs::create_dir_all(dir).map_err(|source| ExportError::Io { path: dir.into(), source })?;
    let paths = OutputPaths { records: dir.join(RECORDS_FILE), summary: dir.join(SUMMARY_FILE), timing: dir.join(TIMING_FILE) };
    let out = create(&paths.records)?;
    write_records(out, records, summary.config.num_users)
        .map_err(|source| ExportError::Records { path: paths.records.clone(), source })?;
    write_json(&paths.summary, summary)?;
    write_json(&paths.timing, timing)?;
    Ok(paths)
}
