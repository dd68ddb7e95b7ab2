//! One-word error detection and correction for clinical notes.
//!
//! A paragraph is split into sentences, each sentence is scored by two linear
//! SVMs over TF-IDF features (one trained on erroneous sentences, one on
//! correct ones), and the sentence with the largest score gap is flagged.
//! Its correction is lifted from the closest training paragraph when one is
//! close enough, and otherwise requested from a pluggable backend.

pub mod corpus;
pub mod correct;
pub mod detect;
pub mod error;
pub mod extractive;
pub mod indexing;
pub mod metrics;
pub mod model_file;
pub mod pipeline;
pub mod runfile;
pub mod svm;
pub mod synth;
pub mod textproc;

pub use corpus::{
    is_na, parse_dataset, parse_numbered_sentences, split_paragraph, write_dataset, ClinicalRecord,
    ColumnSchema, DatasetFormat, IndexedSentence, ParsedDataset, Reject, NA,
};
pub use correct::{
    run_pipeline, BackendAnswer, BackendKind, CorrectionBackend, CorrectionRequest, FallbackBackend,
    HttpBackend, Pipeline, Prediction, Provenance, ProvenanceCounts, RoutingConfig, RunMode,
};
pub use detect::{train_detectors, Detection, DetectorConfig, DetectorPair};
pub use error::{Error, Result};
pub use extractive::{similarity, TrainingPairIndex};
pub use indexing::{resolve_index, IndexResolution};
pub use metrics::{evaluate_run, rouge1_f, EvalReport, ExternalScores, RunEntry};
pub use model_file::PipelineModelFile;
pub use pipeline::{predict_records, train_pipeline, PipelineConfig, PipelineTrainReport};
pub use runfile::{read_run, write_run};
pub use svm::{train_svm, LinearSvmModel, SvmConfig};
pub use textproc::{fit_tfidf, tokenize, Featurizer, SparseVector, TfIdfConfig, TfIdfModel};
