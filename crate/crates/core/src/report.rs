//! Output files.
//!
//! Per page: `<label>.json`. Per student: `<student>_progression.csv`,
//! `<student>_neg_vs_stress.csv` and `<student>_summary.json`. Per run:
//! `run_summary.json` (deterministic) and `run_timing.json` (wall clock).
//!
//! JSON numbers use the shortest representation that parses back to the same
//! `f64`; CSV numbers use 10 decimal places with trailing zeros dropped.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{AccuracyReport, Anomaly, PageAccuracy, PageCluster, StudentSeries};
use crate::backends::SentimentScores;
use crate::stress::{classify_stress, PageStressRecord, StressLevel};

pub const RUN_SUMMARY_FILE: &str = "run_summary.json";
pub const RUN_TIMING_FILE: &str = "run_timing.json";
pub const PROGRESSION_HEADER: [&str; 5] =
    ["page_index", "stress_index", "negative", "neutral", "positive"];
pub const SCATTER_HEADER: [&str; 2] = ["negative", "stress_index"];
pub const CSV_DECIMALS: usize = 10;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Pretty JSON with two-space indent and a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Serialized page record.
pub fn page_json(record: &PageStressRecord) -> Result<String, ReportError> {
    to_json_pretty(record)
}

/// Writes `<label>.json` into `out_dir`.
pub fn emit_page_json(record: &PageStressRecord, out_dir: &Path) -> Result<PathBuf, ReportError> {
    let path = out_dir.join(format!("{}.json", record.student));
    write_file(&path, page_json(record)?.as_bytes())?;
    Ok(path)
}

/// Formats `x` with `places` decimal places, dropping trailing zeros.
pub fn format_decimal(x: f64, places: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let mut s = format!("{x:.places$}");
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn sig(x: f64) -> String {
    format_decimal(x, CSV_DECIMALS)
}

/// Per-student summary file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentSummary {
    pub student: String,
    pub pages: usize,
    pub mean_stress: f64,
    pub mean_sentiment: SentimentScores,
    pub high_stress_pages: Vec<u32>,
    pub anomalies: Vec<Anomaly>,
    pub clusters: Vec<PageCluster>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub neg_stress_r: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub accuracy: Vec<PageAccuracy>,
}

impl StudentSummary {
    pub fn new(series: &StudentSeries, threshold: f64, accuracy: Vec<PageAccuracy>) -> Self {
        StudentSummary {
            student: series.student_id.clone(),
            pages: series.records.len(),
            mean_stress: series.mean_stress,
            mean_sentiment: series.mean_sentiment,
            high_stress_pages: series
                .page_indices
                .iter()
                .zip(&series.records)
                .filter(|(_, r)| classify_stress(r.stress_index, threshold) == StressLevel::High)
                .map(|(&p, _)| p)
                .collect(),
            anomalies: series.anomalies.clone(),
            clusters: series.clusters.clone(),
            neg_stress_r: series.neg_stress_r,
            accuracy,
        }
    }
}

fn write_csv<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<(), ReportError> {
    let csv_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the two plot-data CSVs and the summary JSON for one student.
pub fn emit_plot_series(
    series: &StudentSeries,
    summary: &StudentSummary,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let id = &series.student_id;
    let progression = out_dir.join(format!("{id}_progression.csv"));
    write_csv(
        &progression,
        PROGRESSION_HEADER,
        series.page_indices.iter().zip(&series.records).map(|(p, r)| {
            [
                p.to_string(),
                sig(r.stress_index),
                sig(r.sentiment.negative),
                sig(r.sentiment.neutral),
                sig(r.sentiment.positive),
            ]
        }),
    )?;

    let scatter = out_dir.join(format!("{id}_neg_vs_stress.csv"));
    write_csv(
        &scatter,
        SCATTER_HEADER,
        series
            .records
            .iter()
            .map(|r| [sig(r.sentiment.negative), sig(r.stress_index)]),
    )?;

    let summary_path = out_dir.join(format!("{id}_summary.json"));
    write_file(&summary_path, to_json_pretty(summary)?.as_bytes())?;
    Ok(vec![progression, scatter, summary_path])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentOverview {
    pub student: String,
    pub pages: usize,
    pub mean_stress: f64,
    pub high_stress_pages: usize,
}

/// Everything a run reports. `throughput` and `wall_seconds` are kept out of
/// `run_summary.json` so that file depends only on inputs and config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pages_total: usize,
    pub documents_total: usize,
    pub students: Vec<StudentOverview>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<AccuracyReport>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
    pub config: serde_json::Value,
    #[serde(skip)]
    pub throughput: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Serialize)]
struct RunTiming {
    pages_processed: usize,
    wall_seconds: f64,
    images_per_second: f64,
}

/// Writes `run_summary.json` and `run_timing.json`.
pub fn emit_run_summary(summary: &RunSummary, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let summary_path = out_dir.join(RUN_SUMMARY_FILE);
    write_file(&summary_path, to_json_pretty(summary)?.as_bytes())?;
    let timing_path = out_dir.join(RUN_TIMING_FILE);
    let timing = RunTiming {
        pages_processed: summary.pages_total,
        wall_seconds: summary.wall_seconds,
        images_per_second: summary.throughput,
    };
    write_file(&timing_path, to_json_pretty(&timing)?.as_bytes())?;
    Ok(vec![summary_path, timing_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{aggregate_student, AnomalyConfig};
    use crate::stress::{build_record, StressWeights};

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(0.2637971341609955, 10), "0.2637971342");
        assert_eq!(format_decimal(0.05230807140469551, 10), "0.0523080714");
        assert_eq!(format_decimal(0.8731970191001892, 10), "0.8731970191");
        assert_eq!(format_decimal(0.07449495047330856, 10), "0.0744949505");
        assert_eq!(format_decimal(0.1, 10), "0.1");
        assert_eq!(format_decimal(1.0, 10), "1");
        assert_eq!(format_decimal(0.0, 10), "0");
        assert_eq!(format_decimal(-2.5, 10), "-2.5");
        assert_eq!(format_decimal(9.99999999999, 10), "10");
        assert_eq!(format_decimal(-1e-13, 10), "0");
    }

    #[test]
    fn page_json_key_order_and_roundtrip() {
        let rec = build_record(
            "x_page_1",
            SentimentScores::neutral(),
            &StressWeights::default(),
        );
        let text = page_json(&rec).unwrap();
        let keys = ["\"student\"", "\"sentiment\"", "\"negative\"", "\"neutral\"", "\"positive\"", "\"entropy\"", "\"stress_index\""];
        let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let back: PageStressRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
        assert_eq!(page_json(&back).unwrap(), text);
    }

    #[test]
    fn summary_omits_undefined_r() {
        let w = StressWeights::default();
        let recs = vec![
            build_record("s_page_1", SentimentScores::neutral(), &w),
            build_record("s_page_2", SentimentScores::neutral(), &w),
        ];
        let series = aggregate_student(recs, &AnomalyConfig::default()).unwrap();
        let summary = StudentSummary::new(&series, 0.3, vec![]);
        let v = serde_json::to_value(&summary).unwrap();
        assert!(v.get("neg_stress_r").is_none());
        assert!(v.get("mean_stress").is_some());
    }
}
