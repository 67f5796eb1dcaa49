//! OCR and sentiment inference backends.
//!
//! Inference runs out of process. [`OcrEngine`] and [`SentimentEngine`] are the
//! seams; [`http`] speaks the JSON wire protocol and [`mock`] provides
//! deterministic in-process doubles. [`ocr_recognize`] and
//! [`sentiment_classify`] wrap any engine with the validation every caller
//! relies on: confidence clamping, probability renormalization, and chunking
//! of long texts.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::BinaryImage;

/// Default per-request timeout.
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
/// Longest text a remote sentiment backend receives in one request.
pub const SENTIMENT_CHUNK_CHARS: usize = 512;
/// Tolerance on a sentiment triple's sum before it is renormalized.
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend {backend_id} unavailable: {reason}")]
    Unavailable { backend_id: String, reason: String },
    #[error("backend {backend_id} protocol error: {reason}")]
    Protocol { backend_id: String, reason: String },
    #[error("backend {backend_id} is a {actual:?} backend, expected {expected:?}")]
    WrongKind {
        backend_id: String,
        expected: BackendKind,
        actual: BackendKind,
    },
    #[error("{label}: cannot run OCR on an empty image")]
    EmptyImage { label: String },
    #[error("invalid sentiment scores: {0}")]
    InvalidScores(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Ocr,
    Sentiment,
}

/// Where and how to reach one backend.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    #[serde(rename = "id")]
    pub backend_id: String,
    pub kind: BackendKind,
    /// Base URL, `"mock"`, or `"mock:<corpus dir>"`.
    pub endpoint: String,
    #[serde(default)]
    pub priority: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl BackendDescriptor {
    pub fn new(id: impl Into<String>, kind: BackendKind, endpoint: impl Into<String>) -> Self {
        BackendDescriptor {
            backend_id: id.into(),
            kind,
            endpoint: endpoint.into(),
            priority: 0,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_priority(mut self, priority: u32) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_timeout_ms(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock" || self.endpoint.starts_with("mock:")
    }

    fn check_kind(&self, expected: BackendKind) -> Result<(), BackendError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(BackendError::WrongKind {
                backend_id: self.backend_id.clone(),
                expected,
                actual: self.kind,
            })
        }
    }
}

/// Decoding parameters forwarded verbatim to OCR backends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcrParams {
    pub beam_width: u32,
    pub max_tokens: u32,
}

impl Default for OcrParams {
    fn default() -> Self {
        OcrParams {
            beam_width: 4,
            max_tokens: 256,
        }
    }
}

impl OcrParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.beam_width == 0 {
            return Err("beam_width must be >= 1".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be >= 1".into());
        }
        Ok(())
    }
}

/// One backend's transcription of one page.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcrCandidate {
    pub backend_id: String,
    pub text: String,
    pub confidence: f64,
}

impl OcrCandidate {
    pub fn new(backend_id: impl Into<String>, text: impl Into<String>, confidence: f64) -> Self {
        OcrCandidate {
            backend_id: backend_id.into(),
            text: text.into(),
            confidence,
        }
    }
}

/// Negative/neutral/positive probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentScores {
    pub negative: f64,
    pub neutral: f64,
    pub positive: f64,
}

impl SentimentScores {
    /// Validates a triple as given: every component in [0, 1] and the sum
    /// within [`SUM_TOLERANCE`] of 1. Values are kept unmodified.
    pub fn new(negative: f64, neutral: f64, positive: f64) -> Result<Self, BackendError> {
        let s = SentimentScores {
            negative,
            neutral,
            positive,
        };
        s.check()?;
        Ok(s)
    }

    /// Validates a triple like [`SentimentScores::new`], then divides by the
    /// sum so the components add to 1.
    pub fn normalized(negative: f64, neutral: f64, positive: f64) -> Result<Self, BackendError> {
        let s = Self::new(negative, neutral, positive)?;
        let sum = s.sum();
        Ok(SentimentScores {
            negative: s.negative / sum,
            neutral: s.neutral / sum,
            positive: s.positive / sum,
        })
    }

    /// No evidence either way.
    pub fn neutral() -> Self {
        SentimentScores {
            negative: 0.0,
            neutral: 1.0,
            positive: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.negative, self.neutral, self.positive]
    }

    pub fn sum(&self) -> f64 {
        self.negative + self.neutral + self.positive
    }

    fn check(&self) -> Result<(), BackendError> {
        for (name, v) in [
            ("negative", self.negative),
            ("neutral", self.neutral),
            ("positive", self.positive),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BackendError::InvalidScores(format!(
                    "{name} = {v} is outside [0, 1]"
                )));
            }
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(BackendError::InvalidScores(format!(
                "components sum to {sum}, not 1"
            )));
        }
        Ok(())
    }
}

/// Page handed to an OCR engine.
#[derive(Clone, Copy, Debug)]
pub struct OcrPage<'a> {
    pub label: &'a str,
    pub dpi: u32,
    pub image: &'a BinaryImage,
}

/// What an engine reports before validation.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTranscription {
    pub text: String,
    pub confidence: f64,
}

pub trait OcrEngine: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn transcribe(
        &self,
        page: &OcrPage<'_>,
        params: &OcrParams,
    ) -> Result<RawTranscription, BackendError>;
}

pub trait SentimentEngine: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Longest text, in characters, the engine accepts in one call.
    fn max_chars(&self) -> Option<usize>;

    /// Raw (negative, neutral, positive) for one chunk of text.
    fn score(&self, text: &str) -> Result<[f64; 3], BackendError>;
}

/// A validated OCR result plus an optional note when the reported
/// confidence had to be clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct Recognition {
    pub candidate: OcrCandidate,
    pub warning: Option<String>,
}

/// Runs one OCR engine on one page.
pub fn ocr_recognize(
    engine: &dyn OcrEngine,
    page: &OcrPage<'_>,
    params: &OcrParams,
) -> Result<Recognition, BackendError> {
    let desc = engine.descriptor();
    desc.check_kind(BackendKind::Ocr)?;
    if page.image.mask().is_empty() {
        return Err(BackendError::EmptyImage {
            label: page.label.to_string(),
        });
    }
    let raw = engine.transcribe(page, params)?;
    let (confidence, warning) = if raw.confidence.is_nan() {
        return Err(BackendError::Unavailable {
            backend_id: desc.backend_id.clone(),
            reason: "confidence is NaN".into(),
        });
    } else if (0.0..=1.0).contains(&raw.confidence) {
        (raw.confidence, None)
    } else {
        let clamped = raw.confidence.clamp(0.0, 1.0);
        let note = format!(
            "{}: backend {} reported confidence {} outside [0, 1], clamped to {}",
            page.label, desc.backend_id, raw.confidence, clamped
        );
        tracing::warn!("{note}");
        (clamped, Some(note))
    };
    Ok(Recognition {
        candidate: OcrCandidate {
            backend_id: desc.backend_id.clone(),
            text: raw.text,
            confidence,
        },
        warning,
    })
}

/// Classifies `text`, splitting it into sentence-aligned chunks when it
/// exceeds the engine's limit and mean-pooling the chunk scores.
///
/// Empty (or whitespace-only) text is exactly neutral and never reaches the
/// engine.
pub fn sentiment_classify(
    engine: &dyn SentimentEngine,
    text: &str,
) -> Result<SentimentScores, BackendError> {
    let desc = engine.descriptor();
    desc.check_kind(BackendKind::Sentiment)?;
    if text.trim().is_empty() {
        return Ok(SentimentScores::neutral());
    }
    let chunks = match engine.max_chars() {
        Some(limit) if text.chars().count() > limit => split_into_chunks(text, limit),
        _ => vec![text.to_string()],
    };

    let mut per_chunk = Vec::with_capacity(chunks.len());
    for chunk in &chunks {
        let [n, u, p] = engine.score(chunk)?;
        let scores = SentimentScores::normalized(n, u, p).map_err(|e| BackendError::Protocol {
            backend_id: desc.backend_id.clone(),
            reason: e.to_string(),
        })?;
        per_chunk.push(scores);
    }
    if per_chunk.len() == 1 {
        return Ok(per_chunk[0]);
    }
    Ok(mean_scores(&per_chunk))
}

/// Component-wise mean, renormalized. `scores` must be non-empty.
pub fn mean_scores(scores: &[SentimentScores]) -> SentimentScores {
    let k = scores.len() as f64;
    let mut acc = [0.0f64; 3];
    for s in scores {
        for (a, v) in acc.iter_mut().zip(s.as_array()) {
            *a += v;
        }
    }
    let [n, u, p] = acc.map(|a| a / k);
    let sum = n + u + p;
    SentimentScores {
        negative: n / sum,
        neutral: u / sum,
        positive: p / sum,
    }
}

/// Splits text into chunks of at most `limit` characters, breaking after
/// sentence terminators (`.`, `!`, `?`, newline) where possible, then at
/// whitespace, then anywhere.
pub fn split_into_chunks(text: &str, limit: usize) -> Vec<String> {
    let limit = limit.max(1);
    let mut chunks = Vec::new();
    let mut current = String::new();
    let mut current_len = 0usize;

    for sentence in sentences(text) {
        let len = sentence.chars().count();
        if len > limit {
            if !current.trim().is_empty() {
                chunks.push(std::mem::take(&mut current));
            }
            current.clear();
            current_len = 0;
            chunks.extend(hard_split(sentence, limit));
            continue;
        }
        if current_len + len > limit {
            chunks.push(std::mem::take(&mut current));
            current_len = 0;
        }
        current.push_str(sentence);
        current_len += len;
    }
    if !current.trim().is_empty() {
        chunks.push(current);
    }
    chunks.retain(|c| !c.trim().is_empty());
    chunks
}

/// Sentence pieces, each keeping its terminator and trailing whitespace, so
/// concatenating them reproduces the input.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let boundary = match c {
            '\n' => true,
            '.' | '!' | '?' => iter.peek().is_none_or(|&(_, next)| next.is_whitespace()),
            _ => false,
        };
        if boundary {
            let mut end = i + c.len_utf8();
            while let Some(&(j, next)) = iter.peek() {
                if next.is_whitespace() && next != '\n' {
                    end = j + next.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            out.push(&text[start..end]);
            start = end;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

fn hard_split(sentence: &str, limit: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut len = 0;
    for word in sentence.split_inclusive(char::is_whitespace) {
        let wlen = word.chars().count();
        if len + wlen > limit && len > 0 {
            out.push(std::mem::take(&mut current));
            len = 0;
        }
        if wlen > limit {
            let chars: Vec<char> = word.chars().collect();
            for piece in chars.chunks(limit) {
                out.push(piece.iter().collect());
            }
            continue;
        }
        current.push_str(word);
        len += wlen;
    }
    if len > 0 {
        out.push(current);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Fixed {
        desc: BackendDescriptor,
        limit: Option<usize>,
        replies: Mutex<Vec<[f64; 3]>>,
        seen: Mutex<Vec<String>>,
    }

    impl Fixed {
        fn new(limit: Option<usize>, replies: Vec<[f64; 3]>) -> Self {
            Fixed {
                desc: BackendDescriptor::new("fixed", BackendKind::Sentiment, "mock"),
                limit,
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl SentimentEngine for Fixed {
        fn descriptor(&self) -> &BackendDescriptor {
            &self.desc
        }
        fn max_chars(&self) -> Option<usize> {
            self.limit
        }
        fn score(&self, text: &str) -> Result<[f64; 3], BackendError> {
            self.seen.lock().unwrap().push(text.to_string());
            Ok(self.replies.lock().unwrap().remove(0))
        }
    }

    struct ConfOcr(BackendDescriptor, f64);

    impl OcrEngine for ConfOcr {
        fn descriptor(&self) -> &BackendDescriptor {
            &self.0
        }
        fn transcribe(
            &self,
            _page: &OcrPage<'_>,
            _params: &OcrParams,
        ) -> Result<RawTranscription, BackendError> {
            Ok(RawTranscription {
                text: "x".into(),
                confidence: self.1,
            })
        }
    }

    #[test]
    fn empty_text_is_neutral_without_call() {
        let engine = Fixed::new(None, vec![]);
        assert_eq!(
            sentiment_classify(&engine, "").unwrap(),
            SentimentScores::neutral()
        );
        assert_eq!(
            sentiment_classify(&engine, "  \n ").unwrap(),
            SentimentScores::neutral()
        );
        assert!(engine.seen.lock().unwrap().is_empty());
    }

    #[test]
    fn two_chunks_mean_pool() {
        let engine = Fixed::new(Some(12), vec![[0.2, 0.6, 0.2], [0.4, 0.4, 0.2]]);
        let s = sentiment_classify(&engine, "Short one. Other one.").unwrap();
        assert_eq!(engine.seen.lock().unwrap().len(), 2);
        assert!((s.negative - 0.3).abs() < 1e-12);
        assert!((s.neutral - 0.5).abs() < 1e-12);
        assert!((s.positive - 0.2).abs() < 1e-12);
        assert!((s.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_sum_is_protocol_error() {
        let engine = Fixed::new(None, vec![[0.5, 0.5, 0.5]]);
        assert!(matches!(
            sentiment_classify(&engine, "text"),
            Err(BackendError::Protocol { .. })
        ));
    }

    #[test]
    fn small_drift_is_renormalized() {
        let engine = Fixed::new(None, vec![[0.2, 0.3, 0.5 + 5e-7]]);
        let s = sentiment_classify(&engine, "text").unwrap();
        assert!((s.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wrong_kind_rejected() {
        let mut engine = Fixed::new(None, vec![]);
        engine.desc.kind = BackendKind::Ocr;
        assert!(matches!(
            sentiment_classify(&engine, "x"),
            Err(BackendError::WrongKind { .. })
        ));
    }

    #[test]
    fn confidence_is_clamped_with_warning() {
        let img = BinaryImage::blank(2, 2).unwrap();
        let page = OcrPage {
            label: "s_page_1",
            dpi: 300,
            image: &img,
        };
        let desc = BackendDescriptor::new("o", BackendKind::Ocr, "mock");
        let r = ocr_recognize(&ConfOcr(desc.clone(), 1.7), &page, &OcrParams::default()).unwrap();
        assert_eq!(r.candidate.confidence, 1.0);
        assert_eq!(r.candidate.backend_id, "o");
        assert!(r.warning.is_some());
        let r = ocr_recognize(&ConfOcr(desc.clone(), -0.2), &page, &OcrParams::default()).unwrap();
        assert_eq!(r.candidate.confidence, 0.0);
        let r = ocr_recognize(&ConfOcr(desc, 0.4), &page, &OcrParams::default()).unwrap();
        assert_eq!(r.candidate.confidence, 0.4);
        assert!(r.warning.is_none());
    }

    #[test]
    fn scores_validation() {
        assert!(SentimentScores::new(0.2, 0.3, 0.5).is_ok());
        assert!(SentimentScores::new(-0.1, 0.6, 0.5).is_err());
        assert!(SentimentScores::new(0.2, 0.3, 0.6).is_err());
        assert!(SentimentScores::new(f64::NAN, 0.5, 0.5).is_err());
    }

    #[test]
    fn chunking_respects_limit_and_content() {
        let text = "First sentence here. Second one is a bit longer! Third?\nFourth line without stop";
        for limit in [1usize, 5, 12, 25, 40, 200] {
            let chunks = split_into_chunks(text, limit);
            assert!(chunks.iter().all(|c| c.chars().count() <= limit), "{limit}");
            let joined: String = chunks.concat();
            let squash = |s: &str| s.split_whitespace().collect::<String>();
            assert_eq!(squash(&joined), squash(text), "{limit}");
        }
        assert_eq!(split_into_chunks("A. B.", 3), vec!["A. ", "B."]);
    }

    #[test]
    fn sentence_pieces_reassemble() {
        let text = "e.g. a value. Next!  Then\nmore";
        assert_eq!(sentences(text).concat(), text);
    }
}
