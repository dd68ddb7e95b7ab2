//! Key-value configuration file. Every key is optional; command-line flags
//! override the file, and the file overrides the defaults (or, at prediction
//! time, the values snapshotted in the model file).

use std::path::Path;

use anyhow::Context;
use clinfix_core::{PipelineConfig, RunMode};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub epochs: Option<u32>,
    pub positive_class_weight: Option<f64>,
    pub lowercase: Option<bool>,
    pub sublinear_tf: Option<bool>,
    pub bigrams: Option<bool>,
    pub flag_threshold: Option<f64>,
    pub min_similarity: Option<f64>,
    pub min_sentence_similarity: Option<f64>,
    pub index_floor: Option<f64>,
    pub max_edit_tokens: Option<usize>,
    pub question_template: Option<String>,
    pub mode: Option<RunMode>,
    pub backend_url: Option<String>,
    pub timeout_secs: Option<f64>,
    pub jobs: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Settings> {
        let Some(path) = path else { return Ok(Settings::default()) };
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&raw)
            .map_err(|e| clinfix_core::Error::validation(format!("config {}: {e}", path.display())))
            .map_err(Into::into)
    }

    /// Values set in `other` replace ours.
    pub fn overlay(mut self, other: &Settings) -> Settings {
        let s = &mut self;
        overlay!(s, other; seed, lambda, epochs, positive_class_weight, lowercase, sublinear_tf,
            bigrams, flag_threshold, min_similarity, min_sentence_similarity, index_floor,
            max_edit_tokens, question_template, mode, backend_url, timeout_secs, jobs);
        self
    }

    /// Applies every training-time and prediction-time setting.
    pub fn apply_training(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        for svm in [&mut cfg.detector.error_svm, &mut cfg.detector.correct_svm] {
            if let Some(v) = self.lambda {
                svm.lambda = v;
            }
            if let Some(v) = self.epochs {
                svm.epochs = v;
            }
            if let Some(v) = self.positive_class_weight {
                svm.positive_class_weight = v;
            }
        }
        let tf = &mut cfg.detector.tfidf;
        if let Some(v) = self.lowercase {
            tf.lowercase = v;
        }
        if let Some(v) = self.sublinear_tf {
            tf.sublinear_tf = v;
        }
        if let Some(v) = self.bigrams {
            tf.bigrams = v;
        }
        self.apply_prediction(cfg);
    }

    /// Applies the settings that can change after training.
    pub fn apply_prediction(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.flag_threshold {
            cfg.detector.flag_threshold = v;
        }
        let r = &mut cfg.routing;
        if let Some(v) = self.min_similarity {
            r.min_similarity = v;
        }
        if let Some(v) = self.min_sentence_similarity {
            r.min_sentence_similarity = v;
        }
        if let Some(v) = self.index_floor {
            r.index_floor = v;
        }
        if let Some(v) = self.max_edit_tokens {
            r.max_edit_tokens = v;
        }
        if let Some(v) = &self.question_template {
            r.question_template = v.clone();
        }
    }
}
