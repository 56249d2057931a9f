//! CSV and JSON emission of [`ResultSet`]s.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::batch::{Amplification, ResultSet, SuiteSummary};
use super::config::{LossPoint, OutputFormat};
use crate::metrics::RunRecord;

pub const CSV_COLUMNS: [&str; 12] = [
    "scenario_id",
    "suite",
    "iteration",
    "seed",
    "loss_rate",
    "rtt_ms",
    "success",
    "setup_time_ms",
    "total_bytes",
    "datagrams",
    "retransmissions",
    "restarts",
];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Writes one row per record. Floats use Rust's shortest round-trip
/// formatting so the summary statistics can be recomputed exactly; the
/// setup time is empty for runs that never established.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.scenario_id.clone(),
            r.suite.clone(),
            r.iteration.to_string(),
            r.seed.to_string(),
            r.loss_rate.to_string(),
            r.rtt_ms.to_string(),
            r.success.to_string(),
            r.setup_time_ms.map(|t| t.to_string()).unwrap_or_default(),
            r.total_bytes.to_string(),
            r.datagrams.to_string(),
            r.retransmissions.to_string(),
            r.restarts.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn csv_string(records: &[RunRecord]) -> Result<String, OutputError> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[derive(Debug, Serialize)]
struct RunError<'a> {
    suite: &'a str,
    iteration: u32,
    seed: u64,
    error: &'a str,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    scenario_id: &'a str,
    loss_point: &'a LossPoint,
    rtt_ms: f64,
    runs: usize,
    suites: &'a [SuiteSummary],
    amplification: &'a [Amplification],
    errors: Vec<RunError<'a>>,
}

/// Pretty-printed JSON summary: per-suite statistics (null when a suite
/// has no successful run), ECDF points and amplification ratios.
pub fn summary_json(rs: &ResultSet) -> Result<String, OutputError> {
    let summary = Summary {
        scenario_id: &rs.scenario_id,
        loss_point: &rs.loss_point,
        rtt_ms: rs.rtt_ms,
        runs: rs.records.len(),
        suites: &rs.summaries,
        amplification: &rs.amplification,
        errors: rs
            .records
            .iter()
            .filter_map(|r| {
                r.error.as_deref().map(|error| RunError {
                    suite: &r.suite,
                    iteration: r.iteration,
                    seed: r.seed,
                    error,
                })
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    Ok(text)
}

fn file_stem(rs: &ResultSet) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    };
    format!("{}_{}", clean(&rs.scenario_id), clean(&rs.loss_point.label))
}

/// Writes `<scenario>_<loss point>.csv` and/or `.json` under `dir`,
/// creating it if needed. Returns the paths written.
pub fn emit_results(
    rs: &ResultSet,
    formats: &[OutputFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    let io_err = |path: &Path| {
        let path = path.to_owned();
        move |source| OutputError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = file_stem(rs);
    let mut written = Vec::new();
    for format in formats {
        let (path, body) = match format {
            OutputFormat::Csv => (dir.join(format!("{stem}.csv")), csv_string(&rs.records)?),
            OutputFormat::Json => (dir.join(format!("{stem}.json")), summary_json(rs)?),
        };
        fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::LossModel;

    fn empty() -> ResultSet {
        ResultSet {
            scenario_id: "s 1".into(),
            loss_point: LossPoint {
                label: "ge/x".into(),
                model: LossModel::Uniform { rate: 0.0 },
                loss_rate: 0.0,
            },
            rtt_ms: 10.0,
            records: Vec::new(),
            summaries: vec![SuiteSummary {
                suite: "qrc".into(),
                runs: 0,
                successes: 0,
                failures: 0,
                errors: 0,
                zero_loss_datagrams: 54,
                zero_loss_bytes: 0,
                total_bytes: None,
                setup_time_ms: None,
                setup_time_rtts: None,
                datagrams: None,
                retransmissions: None,
                total_bytes_ecdf: Vec::new(),
            }],
            amplification: Vec::new(),
        }
    }

    #[test]
    fn empty_set_is_header_only_with_null_stats() {
        let rs = empty();
        assert_eq!(csv_string(&rs.records).unwrap(), format!("{}\n", CSV_COLUMNS.join(",")));
        let v: serde_json::Value = serde_json::from_str(&summary_json(&rs).unwrap()).unwrap();
        assert!(v["suites"][0]["total_bytes"].is_null());
        assert!(v["suites"][0]["setup_time_ms"].is_null());
        assert_eq!(v["runs"], 0);
    }

    #[test]
    fn one_record_two_lines() {
        let rec = RunRecord {
            scenario_id: "s".into(),
            suite: "classical".into(),
            iteration: 0,
            seed: 1,
            loss_rate: 0.0229,
            rtt_ms: 31.408,
            success: false,
            setup_time_ms: None,
            total_bytes: 10,
            datagrams: 1,
            retransmissions: 0,
            restarts: 1,
            error: None,
        };
        let text = csv_string(&[rec]).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap(), "s,classical,0,1,0.0229,31.408,false,,10,1,0,1");
    }

    #[test]
    fn emit_writes_sanitised_names() {
        let dir = tempfile::tempdir().unwrap();
        let out = emit_results(&empty(), &[OutputFormat::Csv, OutputFormat::Json], dir.path()).unwrap();
        let names: Vec<_> = out
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["s_1_ge_x.csv", "s_1_ge_x.json"]);
        assert!(out.iter().all(|p| p.exists()));
    }
}
