//! End-to-end batch run: rasterize, preprocess, OCR, vote, score, report.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::analytics::{
    aggregate_student, char_accuracy, throughput, word_accuracy, AccuracyReport, PageAccuracy,
};
use crate::backends::http::{HttpOcr, HttpSentiment};
use crate::backends::mock::{Lexicon, MockOcr, MockSentiment, RecordedSentiment};
use crate::backends::{
    ocr_recognize, sentiment_classify, BackendDescriptor, OcrEngine, OcrPage, SentimentEngine,
};
use crate::config::{Config, ConfigError};
use crate::ensemble::{vote, VotingResult};
use crate::ingestion::{discover_inputs, rasterize_document, DocumentSource, PageImage, GROUND_TRUTH_SUFFIX};
use crate::preprocess::{preprocess_page, BinaryImage};
use crate::report::{
    emit_page_json, emit_plot_series, emit_run_summary, RunSummary, StudentOverview,
    StudentSummary,
};
use crate::stress::{build_record, PageStressRecord};

/// Lexicon file looked up inside a sentiment mock corpus.
pub const LEXICON_FILE: &str = "lexicon.json";
/// Recorded sentiment responses looked up inside a sentiment mock corpus.
pub const RECORDED_SENTIMENT_FILE: &str = "sentiment.json";
pub const INTERMEDIATES_DIR: &str = "intermediates";

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

/// Errors that stop a run before any page is processed.
#[derive(Debug, Error)]
pub enum FatalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("cannot create output directory {path}: {reason}")]
    Output { path: PathBuf, reason: String },
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub exit_code: i32,
}

struct PageResult {
    record: PageStressRecord,
    warnings: Vec<String>,
    accuracy: Option<PageAccuracy>,
}

#[derive(Default)]
struct DocumentResult {
    student_id: String,
    records: Vec<PageStressRecord>,
    accuracy: Vec<PageAccuracy>,
    pages_attempted: usize,
    warnings: Vec<String>,
    errors: Vec<String>,
}

pub struct Pipeline {
    config: Config,
    ocr: Vec<Box<dyn OcrEngine>>,
    sentiment: Box<dyn SentimentEngine>,
    priorities: HashMap<String, u32>,
}

impl Pipeline {
    /// Builds engines for every configured backend.
    pub fn new(config: Config) -> Result<Self, FatalError> {
        config.validate()?;
        let mut ocr: Vec<Box<dyn OcrEngine>> = Vec::new();
        for desc in config.ocr_backends() {
            ocr.push(build_ocr(desc, &config)?);
        }
        let sentiment = match config.sentiment_backend() {
            Some(desc) => build_sentiment(desc, &config)?,
            None => {
                return Err(ConfigError::Invalid("no sentiment backend configured".into()).into())
            }
        };
        Ok(Self::with_engines(config, ocr, sentiment))
    }

    /// Uses the given engines instead of building them from `config.backends`.
    pub fn with_engines(
        config: Config,
        ocr: Vec<Box<dyn OcrEngine>>,
        sentiment: Box<dyn SentimentEngine>,
    ) -> Self {
        let priorities = ocr
            .iter()
            .map(|e| {
                let d = e.descriptor();
                (d.backend_id.clone(), d.priority)
            })
            .collect();
        Pipeline {
            config,
            ocr,
            sentiment,
            priorities,
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Processes every document under the input directory.
    pub fn run(&self) -> Result<RunOutcome, FatalError> {
        let started = Instant::now();
        let cfg = &self.config;
        let discovery = discover_inputs(&cfg.input_dir).map_err(|e| FatalError::Input(e.to_string()))?;
        create_dir(&cfg.out_dir)?;
        if cfg.keep_intermediates {
            create_dir(&cfg.out_dir.join(INTERMEDIATES_DIR))?;
        }

        let mut warnings = discovery.warnings;
        let mut errors: Vec<String> = discovery.rejected.iter().map(|e| e.to_string()).collect();
        if discovery.sources.is_empty() && errors.is_empty() {
            warnings.push(format!(
                "no input documents found in {}",
                cfg.input_dir.display()
            ));
        }

        let documents: Vec<DocumentResult> = discovery
            .sources
            .par_iter()
            .map(|src| self.process_document(src))
            .collect();

        let mut students = Vec::new();
        let mut accuracy = Vec::new();
        let mut pages_rasterized = 0;
        for doc in documents {
            warnings.extend(doc.warnings);
            errors.extend(doc.errors);
            pages_rasterized += doc.pages_attempted;
            if doc.records.is_empty() {
                continue;
            }
            let series = match aggregate_student(doc.records, &cfg.anomaly) {
                Ok(s) => s,
                Err(e) => {
                    errors.push(format!("{}: {e}", doc.student_id));
                    continue;
                }
            };
            let summary = StudentSummary::new(&series, cfg.threshold, doc.accuracy.clone());
            if let Err(e) = emit_plot_series(&series, &summary, &cfg.out_dir) {
                errors.push(format!("{}: {e}", doc.student_id));
            }
            accuracy.extend(doc.accuracy);
            students.push(StudentOverview {
                student: summary.student,
                pages: summary.pages,
                mean_stress: summary.mean_stress,
                high_stress_pages: summary.high_stress_pages.len(),
            });
        }

        for w in &warnings {
            tracing::warn!("{w}");
        }
        for e in &errors {
            tracing::error!("{e}");
        }

        let wall_seconds = started.elapsed().as_secs_f64();
        let images_per_second = throughput(pages_rasterized, wall_seconds);
        let summary = RunSummary {
            pages_total: students.iter().map(|s| s.pages).sum(),
            documents_total: discovery.sources.len(),
            students,
            accuracy: (!accuracy.is_empty())
                .then(|| AccuracyReport::from_pages(&accuracy, images_per_second)),
            warnings,
            errors,
            config: serde_json::to_value(cfg).unwrap_or_default(),
            throughput: images_per_second,
            wall_seconds,
        };
        let mut exit_code = if summary.errors.is_empty() {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        };
        if let Err(e) = emit_run_summary(&summary, &cfg.out_dir) {
            tracing::error!("{e}");
            exit_code = EXIT_PARTIAL;
        }
        Ok(RunOutcome { summary, exit_code })
    }

    fn process_document(&self, src: &DocumentSource) -> DocumentResult {
        let mut doc = DocumentResult {
            student_id: src.student_id.clone(),
            ..Default::default()
        };
        let pages = match rasterize_document(src, self.config.dpi) {
            Ok(p) => p,
            Err(e) => {
                doc.errors.push(format!("{}: {e}", src.student_id));
                return doc;
            }
        };
        doc.pages_attempted = pages.len();
        let results: Vec<(String, Result<PageResult, String>)> = pages
            .par_iter()
            .map(|page| {
                let label = page.label();
                let result = self.process_page(page, &label);
                (label, result)
            })
            .collect();

        for (label, result) in results {
            match result {
                Ok(page) => {
                    doc.warnings.extend(page.warnings);
                    if let Err(e) = emit_page_json(&page.record, &self.config.out_dir) {
                        doc.errors.push(format!("{label}: {e}"));
                    }
                    doc.accuracy.extend(page.accuracy);
                    doc.records.push(page.record);
                }
                Err(e) => doc.errors.push(format!("{label}: {e}")),
            }
        }
        doc
    }

    fn process_page(&self, page: &PageImage, label: &str) -> Result<PageResult, String> {
        let cfg = &self.config;
        let binary = preprocess_page(page, &cfg.preprocess).map_err(|e| e.to_string())?;
        let ocr_page = OcrPage {
            label,
            dpi: page.dpi,
            image: &binary,
        };

        let mut warnings = Vec::new();
        let mut candidates = Vec::with_capacity(self.ocr.len());
        for engine in &self.ocr {
            match ocr_recognize(engine.as_ref(), &ocr_page, &cfg.ocr_params) {
                Ok(rec) => {
                    warnings.extend(rec.warning);
                    candidates.push(rec.candidate);
                }
                Err(e) => warnings.push(format!("{label}: {e}")),
            }
        }
        if candidates.is_empty() {
            return Err("every OCR backend failed".into());
        }
        let voted = vote(&candidates, &self.priorities).map_err(|e| e.to_string())?;
        let text = &voted.selected.text;

        let scores = sentiment_classify(self.sentiment.as_ref(), text).map_err(|e| e.to_string())?;
        let record = build_record(label, scores, &cfg.weights);

        if cfg.keep_intermediates {
            if let Err(e) = write_intermediates(&cfg.out_dir.join(INTERMEDIATES_DIR), label, page, &binary, &voted) {
                warnings.push(format!("{label}: intermediates not written: {e}"));
            }
        }

        let gt_path = cfg.input_dir.join(format!("{label}{GROUND_TRUTH_SUFFIX}"));
        let accuracy = fs::read_to_string(gt_path).ok().map(|reference| PageAccuracy {
            label: label.to_string(),
            char_accuracy: char_accuracy(reference.trim(), text.trim()),
            word_accuracy: word_accuracy(&reference, text),
        });

        Ok(PageResult {
            record,
            warnings,
            accuracy,
        })
    }
}

fn create_dir(path: &Path) -> Result<(), FatalError> {
    fs::create_dir_all(path).map_err(|e| FatalError::Output {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn write_intermediates(
    dir: &Path,
    label: &str,
    page: &PageImage,
    binary: &BinaryImage,
    voted: &VotingResult,
) -> Result<(), String> {
    let png = page.to_png().map_err(|e| e.to_string())?;
    fs::write(dir.join(format!("{label}.png")), png).map_err(|e| e.to_string())?;
    let bin = binary.to_png().map_err(|e| e.to_string())?;
    fs::write(dir.join(format!("{label}_bin.png")), bin).map_err(|e| e.to_string())?;
    fs::write(dir.join(format!("{label}.txt")), &voted.selected.text).map_err(|e| e.to_string())?;
    let vote_json = crate::report::to_json_pretty(voted).map_err(|e| e.to_string())?;
    fs::write(dir.join(format!("{label}_vote.json")), vote_json).map_err(|e| e.to_string())
}

/// `"mock"` uses the configured mock corpus; `"mock:<dir>"` names its own.
fn mock_dir(desc: &BackendDescriptor, cfg: &Config) -> Option<PathBuf> {
    match desc.endpoint.strip_prefix("mock:") {
        Some(dir) => Some(PathBuf::from(dir)),
        None => cfg.mock_corpus.clone(),
    }
}

fn build_ocr(desc: &BackendDescriptor, cfg: &Config) -> Result<Box<dyn OcrEngine>, FatalError> {
    if !desc.is_mock() {
        return Ok(Box::new(HttpOcr::new(desc.clone(), cfg.max_in_flight)));
    }
    let dir = mock_dir(desc, cfg).ok_or_else(|| {
        ConfigError::Invalid(format!(
            "mock OCR backend {:?} needs a mock corpus",
            desc.backend_id
        ))
    })?;
    Ok(Box::new(MockOcr::new(desc.clone(), dir)))
}

fn build_sentiment(
    desc: &BackendDescriptor,
    cfg: &Config,
) -> Result<Box<dyn SentimentEngine>, FatalError> {
    if !desc.is_mock() {
        return Ok(Box::new(HttpSentiment::new(desc.clone(), cfg.max_in_flight)));
    }
    let dir = mock_dir(desc, cfg);
    if let Some(recorded) = dir.as_ref().map(|d| d.join(RECORDED_SENTIMENT_FILE)).filter(|p| p.is_file()) {
        let engine = RecordedSentiment::load(desc.clone(), &recorded)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", recorded.display())))?;
        return Ok(Box::new(engine));
    }
    let lexicon_path = cfg.lexicon.clone().or_else(|| {
        dir.map(|d| d.join(LEXICON_FILE))
            .filter(|p| p.is_file())
    });
    let lexicon = match lexicon_path {
        Some(path) => Lexicon::load(&path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?,
        None => Lexicon::builtin(),
    };
    Ok(Box::new(MockSentiment::new(desc.clone(), lexicon)))
}

/// Resolves engines from `config` and runs once. Fatal problems map to exit
/// code 2 with an empty summary.
pub fn run_pipeline(config: Config) -> Result<RunOutcome, FatalError> {
    Pipeline::new(config)?.run()
}
