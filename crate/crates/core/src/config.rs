//! Run configuration: JSON file values with command-line overrides.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::AnomalyConfig;
use crate::backends::http::DEFAULT_MAX_IN_FLIGHT;
use crate::backends::{BackendDescriptor, BackendKind, OcrParams};
use crate::ingestion::DEFAULT_DPI;
use crate::preprocess::PreprocessConfig;
use crate::stress::{StressWeights, DEFAULT_STRESS_THRESHOLD};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("invalid config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid backend flag {0:?}: expected <id>=<url>")]
    BackendFlag(String),
    #[error("{0}")]
    Invalid(String),
}

/// Keys accepted in the JSON config file. Everything is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dpi: Option<u32>,
    pub weights: Option<StressWeights>,
    pub threshold: Option<f64>,
    pub preprocess: Option<PreprocessConfig>,
    pub backends: Option<Vec<BackendDescriptor>>,
    pub anomaly_cutoff: Option<f64>,
    pub anomaly_min_points: Option<usize>,
    pub ocr_params: Option<OcrParams>,
    pub max_in_flight: Option<usize>,
    pub lexicon: Option<PathBuf>,
    pub mock_corpus: Option<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, path)
    }
}

/// Command-line values; `None` / empty means "not given".
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub input_dir: PathBuf,
    pub out_dir: PathBuf,
    pub config: Option<PathBuf>,
    pub dpi: Option<u32>,
    pub threshold: Option<f64>,
    pub keep_intermediates: bool,
    pub ocr_backends: Vec<String>,
    pub sentiment_backend: Option<String>,
    pub mock_corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

/// Fully resolved configuration. Serialized into the run summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Config {
    pub input_dir: PathBuf,
    pub out_dir: PathBuf,
    pub dpi: u32,
    pub weights: StressWeights,
    pub threshold: f64,
    pub preprocess: PreprocessConfig,
    pub backends: Vec<BackendDescriptor>,
    pub anomaly: AnomalyConfig,
    pub ocr_params: OcrParams,
    pub max_in_flight: usize,
    pub keep_intermediates: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
}

impl Config {
    /// Defaults for everything but the directories; backends are empty.
    pub fn new(input_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Config {
            input_dir: input_dir.into(),
            out_dir: out_dir.into(),
            dpi: DEFAULT_DPI,
            weights: StressWeights::default(),
            threshold: DEFAULT_STRESS_THRESHOLD,
            preprocess: PreprocessConfig::default(),
            backends: Vec::new(),
            anomaly: AnomalyConfig::default(),
            ocr_params: OcrParams::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            keep_intermediates: false,
            mock_corpus: None,
            lexicon: None,
        }
    }

    /// Mock OCR plus lexicon sentiment, reading fixtures from `corpus`.
    pub fn with_mock_backends(mut self, corpus: impl Into<PathBuf>) -> Self {
        self.mock_corpus = Some(corpus.into());
        self.backends = default_mock_backends();
        self
    }

    pub fn ocr_backends(&self) -> impl Iterator<Item = &BackendDescriptor> {
        self.backends.iter().filter(|b| b.kind == BackendKind::Ocr)
    }

    pub fn sentiment_backend(&self) -> Option<&BackendDescriptor> {
        self.backends.iter().find(|b| b.kind == BackendKind::Sentiment)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.dpi == 0 {
            return invalid("dpi must be positive".into());
        }
        if !self.threshold.is_finite() {
            return invalid(format!("threshold must be finite, got {}", self.threshold));
        }
        if !(self.anomaly.cutoff.is_finite() && self.anomaly.cutoff > 0.0) {
            return invalid(format!(
                "anomaly_cutoff must be positive, got {}",
                self.anomaly.cutoff
            ));
        }
        if self.max_in_flight == 0 {
            return invalid("max_in_flight must be at least 1".into());
        }
        self.weights
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.preprocess
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ocr_params.validate().map_err(ConfigError::Invalid)?;

        let mut ids = HashSet::new();
        let mut ranks = HashSet::new();
        for b in &self.backends {
            if b.backend_id.is_empty() {
                return invalid("backend id must not be empty".into());
            }
            if !ids.insert(b.backend_id.as_str()) {
                return invalid(format!("duplicate backend id {:?}", b.backend_id));
            }
            if b.kind == BackendKind::Ocr && !ranks.insert(b.priority) {
                return invalid(format!(
                    "OCR backends share priority {}; priorities must be unique",
                    b.priority
                ));
            }
            if b.endpoint == "mock" && self.mock_corpus.is_none() && b.kind == BackendKind::Ocr {
                return invalid(format!(
                    "backend {:?} uses the mock endpoint but no mock corpus was given",
                    b.backend_id
                ));
            }
        }
        if self.ocr_backends().next().is_none() {
            return invalid("at least one OCR backend is required".into());
        }
        let sentiment = self
            .backends
            .iter()
            .filter(|b| b.kind == BackendKind::Sentiment)
            .count();
        if sentiment != 1 {
            return invalid(format!(
                "exactly one sentiment backend is required, found {sentiment}"
            ));
        }
        Ok(())
    }
}

fn default_mock_backends() -> Vec<BackendDescriptor> {
    vec![
        BackendDescriptor::new("mock-ocr", BackendKind::Ocr, "mock"),
        BackendDescriptor::new("mock-sentiment", BackendKind::Sentiment, "mock"),
    ]
}

/// Splits `id=url`.
pub fn parse_backend_flag(flag: &str) -> Result<(String, String), ConfigError> {
    match flag.split_once('=') {
        Some((id, url)) if !id.is_empty() && !url.is_empty() => {
            Ok((id.to_string(), url.to_string()))
        }
        _ => Err(ConfigError::BackendFlag(flag.to_string())),
    }
}

/// Merges file and flags, flags winning, and validates the result.
pub fn resolve(cli: &Overrides) -> Result<Config, ConfigError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = Config::new(&cli.input_dir, &cli.out_dir);
    cfg.dpi = cli.dpi.or(file.dpi).unwrap_or(DEFAULT_DPI);
    cfg.threshold = cli
        .threshold
        .or(file.threshold)
        .unwrap_or(DEFAULT_STRESS_THRESHOLD);
    cfg.weights = file.weights.unwrap_or_default();
    cfg.preprocess = file.preprocess.unwrap_or_default();
    if let Some(cutoff) = file.anomaly_cutoff {
        cfg.anomaly.cutoff = cutoff;
    }
    if let Some(n) = file.anomaly_min_points {
        cfg.anomaly.min_points = n;
    }
    cfg.ocr_params = file.ocr_params.unwrap_or_default();
    cfg.max_in_flight = file.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT);
    cfg.keep_intermediates = cli.keep_intermediates;
    cfg.mock_corpus = cli.mock_corpus.clone().or(file.mock_corpus);
    cfg.lexicon = cli.lexicon.clone().or(file.lexicon);

    let mut backends = file.backends.unwrap_or_default();
    if !cli.ocr_backends.is_empty() {
        backends.retain(|b| b.kind != BackendKind::Ocr);
        for (rank, flag) in cli.ocr_backends.iter().enumerate() {
            let (id, url) = parse_backend_flag(flag)?;
            backends.push(BackendDescriptor::new(id, BackendKind::Ocr, url).with_priority(rank as u32));
        }
    }
    if let Some(flag) = &cli.sentiment_backend {
        let (id, url) = parse_backend_flag(flag)?;
        backends.retain(|b| b.kind != BackendKind::Sentiment);
        backends.push(BackendDescriptor::new(id, BackendKind::Sentiment, url));
    }
    if backends.is_empty() && cfg.mock_corpus.is_some() {
        backends = default_mock_backends();
    }
    cfg.backends = backends;
    cfg.validate()?;
    Ok(cfg)
}
