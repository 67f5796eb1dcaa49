//! Sentiment entropy and the Stress Index.
//!
//! `S = w_neg * P_neg + w_entropy * H + w_posdef * (1 - P_pos)`, with `H` the
//! natural-log Shannon entropy of the sentiment triple and `S` clamped to
//! [0, 1].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::SentimentScores;

/// Pages strictly above this stress index are classified high.
pub const DEFAULT_STRESS_THRESHOLD: f64 = 0.30;

#[derive(Debug, Error, PartialEq)]
#[error("stress weight {name} = {value} must be a finite non-negative number")]
pub struct WeightError {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StressWeights {
    pub w_neg: f64,
    pub w_entropy: f64,
    pub w_posdef: f64,
}

impl Default for StressWeights {
    fn default() -> Self {
        StressWeights {
            w_neg: 0.6,
            w_entropy: 0.3,
            w_posdef: 0.1,
        }
    }
}

impl StressWeights {
    pub fn new(w_neg: f64, w_entropy: f64, w_posdef: f64) -> Result<Self, WeightError> {
        let w = StressWeights {
            w_neg,
            w_entropy,
            w_posdef,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        for (name, value) in [
            ("w_neg", self.w_neg),
            ("w_entropy", self.w_entropy),
            ("w_posdef", self.w_posdef),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(WeightError { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StressLevel {
    Low,
    High,
}

/// The per-page output record. Field order is the on-disk key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageStressRecord {
    pub student: String,
    pub sentiment: SentimentScores,
    pub entropy: f64,
    pub stress_index: f64,
}

/// Entropy of the uniform triple, ln 3.
pub const MAX_ENTROPY: f64 = 1.098_612_288_668_109_8;

/// Shannon entropy in nats, with `0 ln 0 = 0`.
///
/// Sentiment models emit single-precision probabilities. When every
/// component is exactly representable as `f32`, the sum is evaluated in
/// `f32`, which reproduces the numbers such models' own tooling reports;
/// anything else is evaluated in `f64`. Terms are summed in ascending order
/// so the result is exactly permutation invariant.
pub fn shannon_entropy(s: &SentimentScores) -> f64 {
    let mut p = s.as_array();
    p.sort_by(f64::total_cmp);
    if p.iter().all(|&x| f64::from(x as f32) == x) {
        let mut acc = 0.0f32;
        for x in p.map(|x| x as f32) {
            if x > 0.0 {
                acc += x * x.ln();
            }
        }
        // Adding 0.0 turns -0.0 into 0.0.
        f64::from(-acc).clamp(0.0, MAX_ENTROPY) + 0.0
    } else {
        let acc: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum();
        (-acc).clamp(0.0, MAX_ENTROPY) + 0.0
    }
}

/// Unclamped weighted sum.
pub fn raw_stress_index(s: &SentimentScores, w: &StressWeights) -> f64 {
    w.w_neg * s.negative + w.w_entropy * shannon_entropy(s) + w.w_posdef * (1.0 - s.positive)
}

/// Stress index clamped to [0, 1]. Logs a warning when the clamp binds.
pub fn stress_index(s: &SentimentScores, w: &StressWeights) -> f64 {
    let raw = raw_stress_index(s, w);
    let clamped = raw.clamp(0.0, 1.0);
    if clamped != raw {
        tracing::warn!("stress index {raw} clamped to {clamped}");
    }
    clamped
}

/// High iff `stress > threshold`.
pub fn classify_stress(stress: f64, threshold: f64) -> StressLevel {
    if stress > threshold {
        StressLevel::High
    } else {
        StressLevel::Low
    }
}

pub fn build_record(label: &str, s: SentimentScores, w: &StressWeights) -> PageStressRecord {
    PageStressRecord {
        student: label.to_string(),
        sentiment: s,
        entropy: shannon_entropy(&s),
        stress_index: stress_index(&s, w),
    }
}
