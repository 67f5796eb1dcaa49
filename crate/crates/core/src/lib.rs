//! Batch pipeline turning scanned handwritten answer scripts into per-page
//! Stress Index records.
//!
//! Pages are rasterized, binarized and transcribed by one or more OCR
//! backends; a vote picks one transcription, a sentiment backend scores it,
//! and the resulting probability triple is fused with its entropy into a
//! single stress value. Per-student series, anomaly flags and plot data are
//! written alongside the page records.

pub mod analytics;
pub mod backends;
pub mod config;
pub mod ensemble;
pub mod ingestion;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod stress;

pub use analytics::{
    aggregate_student, char_accuracy, cluster_two_means, detect_anomalies, pearson_r,
    throughput, word_accuracy, AnomalyConfig, StudentSeries,
};
pub use backends::{OcrCandidate, SentimentScores};
pub use config::Config;
pub use ensemble::{edit_distance, vote, VotingResult};
pub use ingestion::PageImage;
pub use pipeline::{run_pipeline, Pipeline, RunOutcome};
pub use preprocess::{otsu_threshold, preprocess_page, BinaryImage, GrayImage, PreprocessConfig};
pub use report::RunSummary;
pub use stress::{
    build_record, classify_stress, shannon_entropy, stress_index, PageStressRecord, StressLevel,
    StressWeights,
};
