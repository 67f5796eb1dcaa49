//! Per-student aggregation and the validation statistics: Pearson
//! correlation, MAD-based anomaly flags, 1-D two-means clustering, and OCR
//! accuracy metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{mean_scores, SentimentScores};
use crate::ensemble::levenshtein;
use crate::ingestion::parse_page_label;
use crate::stress::PageStressRecord;

/// Consistency constant turning a MAD into a standard-deviation estimate.
const MAD_SCALE: f64 = 0.6745;
const MAX_LLOYD_ITERATIONS: usize = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("no page records to aggregate")]
    Empty,
    #[error("record label {0:?} is not of the form <student>_page_<n>")]
    BadLabel(String),
    #[error("records mix students {0:?} and {1:?}")]
    MixedStudents(String, String),
    #[error("student {student}: page {page_index} appears more than once ({labels:?})")]
    DuplicatePage {
        student: String,
        page_index: u32,
        labels: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyConfig {
    /// Flag when |score| exceeds this.
    pub cutoff: f64,
    /// Fewer points than this yields no flags.
    pub min_points: usize,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            cutoff: 3.5,
            min_points: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cluster {
    LowCluster,
    HighCluster,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub page_index: u32,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageCluster {
    pub page_index: u32,
    pub cluster: Cluster,
}

/// One student's pages in order, with summary statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentSeries {
    pub student_id: String,
    pub page_indices: Vec<u32>,
    pub records: Vec<PageStressRecord>,
    pub mean_stress: f64,
    pub mean_sentiment: SentimentScores,
    pub anomalies: Vec<Anomaly>,
    /// Empty when there are fewer than two pages.
    pub clusters: Vec<PageCluster>,
    /// Pearson r between P_neg and stress; `None` when undefined.
    pub neg_stress_r: Option<f64>,
}

pub fn aggregate_student(
    records: Vec<PageStressRecord>,
    anomaly: &AnomalyConfig,
) -> Result<StudentSeries, AnalyticsError> {
    if records.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let mut keyed = Vec::with_capacity(records.len());
    let mut student: Option<String> = None;
    for rec in records {
        let (id, page) =
            parse_page_label(&rec.student).ok_or_else(|| AnalyticsError::BadLabel(rec.student.clone()))?;
        match &student {
            None => student = Some(id.to_string()),
            Some(s) if s != id => {
                return Err(AnalyticsError::MixedStudents(s.clone(), id.to_string()))
            }
            Some(_) => {}
        }
        keyed.push((page, rec));
    }
    let student_id = student.unwrap_or_default();
    keyed.sort_by_key(|(page, _)| *page);
    if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(AnalyticsError::DuplicatePage {
            student: student_id,
            page_index: w[0].0,
            labels: vec![w[0].1.student.clone(), w[1].1.student.clone()],
        });
    }

    let (page_indices, records): (Vec<u32>, Vec<PageStressRecord>) = keyed.into_iter().unzip();
    let stress: Vec<f64> = records.iter().map(|r| r.stress_index).collect();
    let negative: Vec<f64> = records.iter().map(|r| r.sentiment.negative).collect();
    let sentiments: Vec<SentimentScores> = records.iter().map(|r| r.sentiment).collect();

    let mean_stress = stress.iter().sum::<f64>() / stress.len() as f64;
    let anomalies = detect_anomalies(&stress, anomaly)
        .into_iter()
        .map(|(i, score)| Anomaly {
            page_index: page_indices[i],
            score,
        })
        .collect();
    let clusters = cluster_two_means(&stress)
        .map(|assignment| {
            page_indices
                .iter()
                .zip(assignment)
                .map(|(&page_index, cluster)| PageCluster {
                    page_index,
                    cluster,
                })
                .collect()
        })
        .unwrap_or_default();

    Ok(StudentSeries {
        student_id,
        mean_stress,
        mean_sentiment: mean_scores(&sentiments),
        neg_stress_r: pearson_r(&negative, &stress),
        anomalies,
        clusters,
        page_indices,
        records,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample Pearson correlation. `None` when lengths differ, fewer than two
/// points, or either variable has zero variance.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Modified z-scores `0.6745 (x - median) / MAD`, flagged above the cutoff.
/// With zero MAD, falls back to ordinary z-scores (sample deviation); with
/// zero deviation too, or too few points, nothing is flagged.
pub fn detect_anomalies(values: &[f64], cfg: &AnomalyConfig) -> Vec<(usize, f64)> {
    if values.len() < cfg.min_points.max(2) {
        return Vec::new();
    }
    let m = median(values).unwrap_or(0.0);
    let deviations: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    let mad = median(&deviations).unwrap_or(0.0);

    let scores: Vec<f64> = if mad > 0.0 {
        values.iter().map(|x| MAD_SCALE * (x - m) / mad).collect()
    } else {
        let mu = mean(values);
        let var = values.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        let sd = var.sqrt();
        if sd <= 0.0 {
            return Vec::new();
        }
        values.iter().map(|x| (x - mu) / sd).collect()
    };
    scores
        .into_iter()
        .enumerate()
        .filter(|(_, z)| z.abs() > cfg.cutoff)
        .collect()
}

/// Deterministic 1-D 2-means seeded at the extremes. Ties go to the lower
/// centroid. `None` for fewer than two values.
pub fn cluster_two_means(values: &[f64]) -> Option<Vec<Cluster>> {
    if values.len() < 2 {
        return None;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Some(vec![Cluster::LowCluster; values.len()]);
    }
    let (mut c_low, mut c_high) = (lo, hi);
    let mut assignment: Vec<Cluster> = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let next: Vec<Cluster> = values
            .iter()
            .map(|&x| {
                if (x - c_low).abs() <= (x - c_high).abs() {
                    Cluster::LowCluster
                } else {
                    Cluster::HighCluster
                }
            })
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
        let centroid = |which: Cluster| {
            let members: Vec<f64> = values
                .iter()
                .zip(&assignment)
                .filter(|(_, &c)| c == which)
                .map(|(&x, _)| x)
                .collect();
            (!members.is_empty()).then(|| mean(&members))
        };
        c_low = centroid(Cluster::LowCluster).unwrap_or(c_low);
        c_high = centroid(Cluster::HighCluster).unwrap_or(c_high);
    }
    if c_low > c_high {
        for c in &mut assignment {
            *c = match c {
                Cluster::LowCluster => Cluster::HighCluster,
                Cluster::HighCluster => Cluster::LowCluster,
            };
        }
    }
    Some(assignment)
}

fn accuracy<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> f64 {
    if reference.is_empty() {
        return if hypothesis.is_empty() { 1.0 } else { 0.0 };
    }
    let d = levenshtein(reference, hypothesis) as f64;
    (1.0 - d / reference.len() as f64).max(0.0)
}

/// `max(0, 1 - char_distance / |reference|)`.
pub fn char_accuracy(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    accuracy(&r, &h)
}

/// Like [`char_accuracy`] over whitespace-separated tokens.
pub fn word_accuracy(reference: &str, hypothesis: &str) -> f64 {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    accuracy(&r, &h)
}

/// Pages per second; zero when no time elapsed.
pub fn throughput(pages_processed: usize, wall_seconds: f64) -> f64 {
    if wall_seconds > 0.0 {
        pages_processed as f64 / wall_seconds
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageAccuracy {
    pub label: String,
    pub char_accuracy: f64,
    pub word_accuracy: f64,
}

/// Run-level OCR quality and speed. Accuracies are `None` when no page had a
/// ground-truth transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub char_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_accuracy: Option<f64>,
    pub pages_with_ground_truth: usize,
    /// Wall-clock dependent, so written to the timing file rather than here.
    #[serde(skip, default)]
    pub images_per_second: f64,
}

impl AccuracyReport {
    pub fn from_pages(pages: &[PageAccuracy], images_per_second: f64) -> Self {
        let n = pages.len();
        let avg = |f: fn(&PageAccuracy) -> f64| {
            (n > 0).then(|| pages.iter().map(f).sum::<f64>() / n as f64)
        };
        AccuracyReport {
            char_accuracy: avg(|p| p.char_accuracy),
            word_accuracy: avg(|p| p.word_accuracy),
            pages_with_ground_truth: n,
            images_per_second,
        }
    }
}
