//! Deterministic in-process backends for hermetic runs.
//!
//! OCR fixtures are keyed by page label: `<label>.txt` holds the text and an
//! optional `<label>.conf` the confidence. The sentiment mock counts lexicon
//! hits and returns Laplace-smoothed probabilities.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    BackendDescriptor, BackendError, OcrEngine, OcrPage, OcrParams, RawTranscription,
    SentimentEngine, SentimentScores,
};

/// Confidence used when a fixture has no `.conf` sidecar.
pub const DEFAULT_FIXTURE_CONFIDENCE: f64 = 0.9;

/// Fixture lookup. Unknown labels transcribe to `("", 0.0)`.
pub fn mock_ocr(corpus_dir: &Path, label: &str) -> RawTranscription {
    let text_path = corpus_dir.join(format!("{label}.txt"));
    let Ok(text) = fs::read_to_string(&text_path) else {
        return RawTranscription {
            text: String::new(),
            confidence: 0.0,
        };
    };
    let confidence = fs::read_to_string(corpus_dir.join(format!("{label}.conf")))
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .unwrap_or(DEFAULT_FIXTURE_CONFIDENCE);
    RawTranscription { text, confidence }
}

pub struct MockOcr {
    descriptor: BackendDescriptor,
    corpus_dir: PathBuf,
}

impl MockOcr {
    pub fn new(descriptor: BackendDescriptor, corpus_dir: impl Into<PathBuf>) -> Self {
        MockOcr {
            descriptor,
            corpus_dir: corpus_dir.into(),
        }
    }

    pub fn corpus_dir(&self) -> &Path {
        &self.corpus_dir
    }
}

impl OcrEngine for MockOcr {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn transcribe(
        &self,
        page: &OcrPage<'_>,
        _params: &OcrParams,
    ) -> Result<RawTranscription, BackendError> {
        // A page with no ink is confidently blank.
        if page.image.ink_count() == 0 {
            return Ok(RawTranscription {
                text: String::new(),
                confidence: 1.0,
            });
        }
        Ok(mock_ocr(&self.corpus_dir, page.label))
    }
}

/// Negative and positive word lists for [`mock_sentiment`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
pub struct Lexicon {
    #[serde(default)]
    negative: BTreeSet<String>,
    #[serde(default)]
    positive: BTreeSet<String>,
}

impl Lexicon {
    pub fn new<I, J, S, T>(negative: I, positive: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        Lexicon {
            negative: negative
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .collect(),
            positive: positive
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .collect(),
        }
    }

    /// Reads `{"negative": [...], "positive": [...]}`.
    pub fn load(path: &Path) -> Result<Self, String> {
        let raw = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed: Lexicon =
            serde_json::from_str(&raw).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Lexicon::new(parsed.negative, parsed.positive))
    }

    /// Small general-purpose lexicon used when none is configured.
    pub fn builtin() -> Self {
        Lexicon::new(
            [
                "anxious", "anxiety", "afraid", "bad", "can't", "cannot", "confused", "difficult",
                "doubt", "fail", "failed", "fear", "frustrated", "frustrating", "hard", "hate",
                "hopeless", "maybe", "nervous", "panic", "possibly", "problem", "sorry",
                "stress", "stressed", "struggle", "tired", "unsure", "worried", "wrong",
            ],
            [
                "calm", "clear", "confident", "easy", "enjoy", "excellent", "good", "great",
                "happy", "love", "positive", "success",
                "sure", "well",
            ],
        )
    }

    /// (negative hits, positive hits) over lowercase whole tokens.
    pub fn count_hits(&self, text: &str) -> (usize, usize) {
        let mut neg = 0;
        let mut pos = 0;
        for token in tokens(text) {
            let token = token.to_lowercase();
            if self.negative.contains(&token) {
                neg += 1;
            }
            if self.positive.contains(&token) {
                pos += 1;
            }
        }
        (neg, pos)
    }
}

/// Word tokens: maximal runs of alphanumerics and apostrophes.
fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .map(|t| t.trim_matches(|c| c == '\'' || c == '\u{2019}'))
        .filter(|t| !t.is_empty())
}

/// `negative = (n+1)/(n+p+3)`, `positive = (p+1)/(n+p+3)`, neutral takes the
/// remainder.
pub fn mock_sentiment(lexicon: &Lexicon, text: &str) -> SentimentScores {
    let (n, p) = lexicon.count_hits(text);
    let denom = (n + p + 3) as f64;
    let negative = (n + 1) as f64 / denom;
    let positive = (p + 1) as f64 / denom;
    SentimentScores {
        negative,
        neutral: 1.0 - negative - positive,
        positive,
    }
}

pub struct MockSentiment {
    descriptor: BackendDescriptor,
    lexicon: Lexicon,
}

impl MockSentiment {
    pub fn new(descriptor: BackendDescriptor, lexicon: Lexicon) -> Self {
        MockSentiment {
            descriptor,
            lexicon,
        }
    }
}

impl SentimentEngine for MockSentiment {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn max_chars(&self) -> Option<usize> {
        None
    }

    fn score(&self, text: &str) -> Result<[f64; 3], BackendError> {
        Ok(mock_sentiment(&self.lexicon, text).as_array())
    }
}

/// Replays recorded model outputs, keyed by whitespace-normalized text.
pub struct RecordedSentiment {
    descriptor: BackendDescriptor,
    recordings: HashMap<String, [f64; 3]>,
}

#[derive(Deserialize)]
struct Recording {
    text: String,
    negative: f64,
    neutral: f64,
    positive: f64,
}

impl RecordedSentiment {
    pub fn new(descriptor: BackendDescriptor) -> Self {
        RecordedSentiment {
            descriptor,
            recordings: HashMap::new(),
        }
    }

    pub fn record(mut self, text: &str, scores: [f64; 3]) -> Self {
        self.recordings.insert(normalize_ws(text), scores);
        self
    }

    /// Reads a JSON array of `{"text", "negative", "neutral", "positive"}`.
    pub fn load(descriptor: BackendDescriptor, path: &Path) -> Result<Self, String> {
        let raw = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let entries: Vec<Recording> =
            serde_json::from_str(&raw).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(entries.into_iter().fold(Self::new(descriptor), |acc, r| {
            acc.record(&r.text, [r.negative, r.neutral, r.positive])
        }))
    }
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl SentimentEngine for RecordedSentiment {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn max_chars(&self) -> Option<usize> {
        None
    }

    fn score(&self, text: &str) -> Result<[f64; 3], BackendError> {
        self.recordings
            .get(&normalize_ws(text))
            .copied()
            .ok_or_else(|| BackendError::Unavailable {
                backend_id: self.descriptor.backend_id.clone(),
                reason: "no recording for this text".into(),
            })
    }
}
