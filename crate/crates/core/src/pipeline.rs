//! Training the full pipeline and batch prediction.

use serde::{Deserialize, Serialize};

use crate::corpus::ClinicalRecord;
use crate::correct::{run_pipeline, CorrectionBackend, Pipeline, Prediction, RoutingConfig, RunMode};
use crate::detect::{train_detectors, DetectorConfig, DetectorTrainReport};
use crate::error::Result;
use crate::extractive::TrainingPairIndex;

/// Every tunable of the pipeline; snapshotted into the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub detector: DetectorConfig,
    pub routing: RoutingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            detector: DetectorConfig::default(),
            routing: RoutingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrainReport {
    pub n_records: usize,
    pub n_flagged: usize,
    pub n_indexed_pairs: usize,
    pub detector: DetectorTrainReport,
}

/// Trains both detectors and indexes the flagged training pairs. The single
/// `config.seed` drives both SVMs.
pub fn train_pipeline(
    records: &[ClinicalRecord],
    config: &PipelineConfig,
) -> Result<(Pipeline, PipelineTrainReport)> {
    let detector_config = config.detector.with_seed(config.seed);
    let (detectors, detector_report) = train_detectors(records, &detector_config)?;
    let pair_index = TrainingPairIndex::build(records);
    let report = PipelineTrainReport {
        n_records: records.len(),
        n_flagged: records.iter().filter(|r| r.gold_flag == Some(true)).count(),
        n_indexed_pairs: pair_index.len(),
        detector: detector_report,
    };
    let pipeline = Pipeline { detectors, pair_index, routing: config.routing.clone() };
    Ok((pipeline, report))
}

/// Sequential prediction preserving input order.
pub fn predict_records(
    pipeline: &Pipeline,
    backend: &dyn CorrectionBackend,
    records: &[ClinicalRecord],
    mode: RunMode,
) -> Vec<Prediction> {
    records
        .iter()
        .map(|r| run_pipeline(pipeline, backend, r, mode))
        .collect()
}
