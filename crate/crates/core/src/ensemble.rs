//! Picks one transcription per page from several OCR backends.
//!
//! Highest confidence wins. Confidence ties go to the candidate that agrees
//! most with the others (mean normalized edit similarity), then to the
//! backend with the lowest priority number.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::OcrCandidate;

/// Absolute tolerance for confidence and similarity ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoteError {
    #[error("no OCR candidates to vote on")]
    Empty,
    #[error("backend {0} contributed more than one candidate")]
    DuplicateBackend(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMethod {
    MaxConfidence,
    SimilarityTiebreak,
    PriorityTiebreak,
    SoleCandidate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VotingResult {
    pub selected: OcrCandidate,
    pub candidates: Vec<OcrCandidate>,
    pub method: VoteMethod,
}

/// Levenshtein distance over arbitrary sequences, unit costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.len() < b.len() {
        return levenshtein(b, a);
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character-level edit distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein(&a, &b)
}

/// `1 - distance / max(len)`, 1.0 for two empty strings.
pub fn similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

/// Selects one candidate. `priorities` maps backend id to tie-break rank
/// (lower wins); unknown backends rank last.
pub fn vote(
    candidates: &[OcrCandidate],
    priorities: &HashMap<String, u32>,
) -> Result<VotingResult, VoteError> {
    if candidates.is_empty() {
        return Err(VoteError::Empty);
    }
    let mut seen = HashSet::new();
    for c in candidates {
        if !seen.insert(c.backend_id.as_str()) {
            return Err(VoteError::DuplicateBackend(c.backend_id.clone()));
        }
    }
    let rank = |c: &OcrCandidate| {
        (
            priorities.get(&c.backend_id).copied().unwrap_or(u32::MAX),
            c.backend_id.clone(),
        )
    };
    // Canonical order makes every float sum below independent of input order.
    let mut ordered: Vec<&OcrCandidate> = candidates.iter().collect();
    ordered.sort_by_key(|c| rank(c));

    let finish = |selected: &OcrCandidate, method| VotingResult {
        selected: selected.clone(),
        candidates: candidates.to_vec(),
        method,
    };

    if ordered.len() == 1 {
        return Ok(finish(ordered[0], VoteMethod::SoleCandidate));
    }

    let top = ordered
        .iter()
        .map(|c| c.confidence)
        .fold(f64::NEG_INFINITY, f64::max);
    let leaders: Vec<usize> = (0..ordered.len())
        .filter(|&i| ordered[i].confidence >= top - TIE_TOLERANCE)
        .collect();
    if leaders.len() == 1 {
        return Ok(finish(ordered[leaders[0]], VoteMethod::MaxConfidence));
    }

    let mean_similarity = |i: usize| {
        let others = ordered.len() - 1;
        let total: f64 = (0..ordered.len())
            .filter(|&j| j != i)
            .map(|j| similarity(&ordered[i].text, &ordered[j].text))
            .sum();
        total / others as f64
    };
    let scored: Vec<(usize, f64)> = leaders.iter().map(|&i| (i, mean_similarity(i))).collect();
    let best = scored
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let finalists: Vec<usize> = scored
        .iter()
        .filter(|&&(_, s)| s >= best - TIE_TOLERANCE)
        .map(|&(i, _)| i)
        .collect();

    // `ordered` is sorted by priority, so the first finalist wins any
    // remaining tie.
    let winner = ordered[finalists[0]];
    let same_text = finalists.iter().all(|&i| ordered[i].text == winner.text);
    let method = if same_text {
        VoteMethod::SimilarityTiebreak
    } else {
        VoteMethod::PriorityTiebreak
    };
    Ok(finish(winner, method))
}
