//! Python bindings. Built as the `inkstress` extension module.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use inkstress::analytics::{self, AnomalyConfig, Cluster};
use inkstress::config::{resolve, Overrides};
use inkstress::ensemble::{self, VoteMethod};
use inkstress::preprocess::{self, GrayImage};
use inkstress::report;
use inkstress::stress::{self, StressLevel, StressWeights};
use inkstress::{OcrCandidate, PageStressRecord, SentimentScores};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn weights(w_neg: f64, w_entropy: f64, w_posdef: f64) -> PyResult<StressWeights> {
    StressWeights::new(w_neg, w_entropy, w_posdef).map_err(value_err)
}

fn level_name(level: StressLevel) -> &'static str {
    match level {
        StressLevel::Low => "low",
        StressLevel::High => "high",
    }
}

fn method_name(method: VoteMethod) -> &'static str {
    match method {
        VoteMethod::MaxConfidence => "max_confidence",
        VoteMethod::SimilarityTiebreak => "similarity_tiebreak",
        VoteMethod::PriorityTiebreak => "priority_tiebreak",
        VoteMethod::SoleCandidate => "sole_candidate",
    }
}

fn cluster_name(c: Cluster) -> &'static str {
    match c {
        Cluster::LowCluster => "low_cluster",
        Cluster::HighCluster => "high_cluster",
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated (negative, neutral, positive) probability triple.
#[pyclass(name = "SentimentScores", module = "inkstress", frozen, from_py_object)]
#[derive(Clone)]
struct PySentiment(SentimentScores);

#[pymethods]
impl PySentiment {
    #[new]
    #[pyo3(signature = (negative, neutral, positive, normalize = false))]
    fn new(negative: f64, neutral: f64, positive: f64, normalize: bool) -> PyResult<Self> {
        let s = if normalize {
            SentimentScores::normalized(negative, neutral, positive)
        } else {
            SentimentScores::new(negative, neutral, positive)
        };
        s.map(PySentiment).map_err(value_err)
    }

    #[getter]
    fn negative(&self) -> f64 {
        self.0.negative
    }

    #[getter]
    fn neutral(&self) -> f64 {
        self.0.neutral
    }

    #[getter]
    fn positive(&self) -> f64 {
        self.0.positive
    }

    fn entropy(&self) -> f64 {
        stress::shannon_entropy(&self.0)
    }

    #[pyo3(signature = (w_neg = 0.6, w_entropy = 0.3, w_posdef = 0.1))]
    fn stress_index(&self, w_neg: f64, w_entropy: f64, w_posdef: f64) -> PyResult<f64> {
        Ok(stress::stress_index(&self.0, &weights(w_neg, w_entropy, w_posdef)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "SentimentScores(negative={}, neutral={}, positive={})",
            self.0.negative, self.0.neutral, self.0.positive
        )
    }
}

/// Per-page output record.
#[pyclass(name = "PageStressRecord", module = "inkstress", frozen)]
struct PyRecord(PageStressRecord);

#[pymethods]
impl PyRecord {
    #[getter]
    fn student(&self) -> &str {
        &self.0.student
    }

    #[getter]
    fn sentiment(&self) -> PySentiment {
        PySentiment(self.0.sentiment)
    }

    #[getter]
    fn entropy(&self) -> f64 {
        self.0.entropy
    }

    #[getter]
    fn stress_index(&self) -> f64 {
        self.0.stress_index
    }

    #[pyo3(signature = (threshold = stress::DEFAULT_STRESS_THRESHOLD))]
    fn level(&self, threshold: f64) -> &'static str {
        level_name(stress::classify_stress(self.0.stress_index, threshold))
    }

    /// The exact text written to `<label>.json`.
    fn to_json(&self) -> PyResult<String> {
        report::page_json(&self.0).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "PageStressRecord(student={:?}, entropy={}, stress_index={})",
            self.0.student, self.0.entropy, self.0.stress_index
        )
    }
}

#[pyfunction]
fn shannon_entropy(negative: f64, neutral: f64, positive: f64) -> PyResult<f64> {
    Ok(PySentiment::new(negative, neutral, positive, false)?.entropy())
}

#[pyfunction]
#[pyo3(signature = (negative, neutral, positive, w_neg = 0.6, w_entropy = 0.3, w_posdef = 0.1))]
fn stress_index(
    negative: f64,
    neutral: f64,
    positive: f64,
    w_neg: f64,
    w_entropy: f64,
    w_posdef: f64,
) -> PyResult<f64> {
    PySentiment::new(negative, neutral, positive, false)?.stress_index(w_neg, w_entropy, w_posdef)
}

#[pyfunction]
#[pyo3(signature = (stress, threshold = stress::DEFAULT_STRESS_THRESHOLD))]
fn classify_stress(stress: f64, threshold: f64) -> &'static str {
    level_name(stress::classify_stress(stress, threshold))
}

#[pyfunction]
#[pyo3(signature = (label, sentiment, w_neg = 0.6, w_entropy = 0.3, w_posdef = 0.1))]
fn build_record(
    label: &str,
    sentiment: PySentiment,
    w_neg: f64,
    w_entropy: f64,
    w_posdef: f64,
) -> PyResult<PyRecord> {
    let w = weights(w_neg, w_entropy, w_posdef)?;
    Ok(PyRecord(stress::build_record(label, sentiment.0, &w)))
}

#[pyfunction]
fn edit_distance(a: &str, b: &str) -> usize {
    ensemble::edit_distance(a, b)
}

#[pyfunction]
fn similarity(a: &str, b: &str) -> f64 {
    ensemble::similarity(a, b)
}

/// `candidates` is a list of `(backend_id, text, confidence)`.
#[pyfunction]
#[pyo3(signature = (candidates, priorities = None))]
fn vote<'py>(
    py: Python<'py>,
    candidates: Vec<(String, String, f64)>,
    priorities: Option<HashMap<String, u32>>,
) -> PyResult<Bound<'py, PyDict>> {
    let candidates: Vec<OcrCandidate> = candidates
        .into_iter()
        .map(|(id, text, conf)| OcrCandidate::new(id, text, conf))
        .collect();
    let result = ensemble::vote(&candidates, &priorities.unwrap_or_default()).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("backend_id", &result.selected.backend_id)?;
    out.set_item("text", &result.selected.text)?;
    out.set_item("confidence", result.selected.confidence)?;
    out.set_item("method", method_name(result.method))?;
    Ok(out)
}

/// Otsu threshold of a row-major 8-bit grayscale buffer.
#[pyfunction]
fn otsu_threshold(pixels: Vec<u8>, width: u32, height: u32) -> PyResult<u8> {
    let img = GrayImage::new(width, height, pixels).map_err(value_err)?;
    Ok(preprocess::otsu_threshold(&img))
}

/// Ink mask (`True` = ink) of a grayscale buffer after Otsu binarization.
#[pyfunction]
fn binarize(pixels: Vec<u8>, width: u32, height: u32) -> PyResult<Vec<bool>> {
    let img = GrayImage::new(width, height, pixels).map_err(value_err)?;
    Ok(preprocess::binarize(&img).mask().to_vec())
}

#[pyfunction]
fn pearson_r(x: Vec<f64>, y: Vec<f64>) -> Option<f64> {
    analytics::pearson_r(&x, &y)
}

/// `(position, score)` for every flagged value.
#[pyfunction]
#[pyo3(signature = (values, cutoff = 3.5, min_points = 4))]
fn detect_anomalies(values: Vec<f64>, cutoff: f64, min_points: usize) -> Vec<(usize, f64)> {
    analytics::detect_anomalies(&values, &AnomalyConfig { cutoff, min_points })
}

#[pyfunction]
fn cluster_two_means(values: Vec<f64>) -> Option<Vec<&'static str>> {
    analytics::cluster_two_means(&values).map(|cs| cs.into_iter().map(cluster_name).collect())
}

#[pyfunction]
fn char_accuracy(reference: &str, hypothesis: &str) -> f64 {
    analytics::char_accuracy(reference, hypothesis)
}

#[pyfunction]
fn word_accuracy(reference: &str, hypothesis: &str) -> f64 {
    analytics::word_accuracy(reference, hypothesis)
}

/// Runs the batch pipeline. Returns `(exit_code, run_summary)`; fatal
/// configuration or input errors raise.
#[pyfunction]
#[pyo3(signature = (
    input_dir,
    out_dir,
    *,
    mock_corpus = None,
    config = None,
    dpi = None,
    threshold = None,
    keep_intermediates = false,
    ocr_backends = None,
    sentiment_backend = None,
    lexicon = None,
))]
#[allow(clippy::too_many_arguments)]
fn analyze<'py>(
    py: Python<'py>,
    input_dir: PathBuf,
    out_dir: PathBuf,
    mock_corpus: Option<PathBuf>,
    config: Option<PathBuf>,
    dpi: Option<u32>,
    threshold: Option<f64>,
    keep_intermediates: bool,
    ocr_backends: Option<Vec<String>>,
    sentiment_backend: Option<String>,
    lexicon: Option<PathBuf>,
) -> PyResult<(i32, Bound<'py, PyAny>)> {
    let overrides = Overrides {
        input_dir,
        out_dir,
        config,
        dpi,
        threshold,
        keep_intermediates,
        ocr_backends: ocr_backends.unwrap_or_default(),
        sentiment_backend,
        mock_corpus,
        lexicon,
    };
    let cfg = resolve(&overrides).map_err(value_err)?;
    let run = py
        .detach(|| inkstress::run_pipeline(cfg))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let summary = report::to_json_pretty(&run.summary).map_err(value_err)?;
    Ok((run.exit_code, json_to_py(py, &summary)?))
}

#[pymodule]
#[pyo3(name = "inkstress")]
fn inkstress_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DEFAULT_STRESS_THRESHOLD", stress::DEFAULT_STRESS_THRESHOLD)?;
    m.add_class::<PySentiment>()?;
    m.add_class::<PyRecord>()?;
    m.add_function(wrap_pyfunction!(shannon_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(stress_index, m)?)?;
    m.add_function(wrap_pyfunction!(classify_stress, m)?)?;
    m.add_function(wrap_pyfunction!(build_record, m)?)?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(vote, m)?)?;
    m.add_function(wrap_pyfunction!(otsu_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(binarize, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_r, m)?)?;
    m.add_function(wrap_pyfunction!(detect_anomalies, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_two_means, m)?)?;
    m.add_function(wrap_pyfunction!(char_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(word_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
