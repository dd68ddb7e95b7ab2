//! Sentence-level error detection with two linear SVMs.
//!
//! Sentence labels are derived from paragraph-level annotations: the annotated
//! error sentence of a flagged record is an error example, every other
//! sentence is a clean example, and the gold corrected sentence is an extra
//! clean example that differs from its error twin by one word. One SVM learns
//! "looks erroneous", the other "looks correct"; a sentence's combined score is
//! the difference of the two.

use serde::{Deserialize, Serialize};

use crate::corpus::{is_na, ClinicalRecord, IndexedSentence};
use crate::error::{Error, Result};
use crate::svm::{train_svm, LinearSvmModel, SvmConfig, TrainReport};
use crate::textproc::{feature_terms, fit_tfidf, tokenize, SparseVector, TfIdfConfig, TfIdfModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub tfidf: TfIdfConfig,
    pub error_svm: SvmConfig,
    pub correct_svm: SvmConfig,
    pub flag_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            tfidf: TfIdfConfig::default(),
            error_svm: SvmConfig::default(),
            correct_svm: SvmConfig::default(),
            flag_threshold: 0.0,
        }
    }
}

impl DetectorConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.error_svm.seed = seed;
        self.correct_svm.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorPair {
    pub tfidf: TfIdfModel,
    pub error_svm: LinearSvmModel,
    pub correct_svm: LinearSvmModel,
    pub flag_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceScore {
    pub declared_index: u32,
    /// Always `error_score - correct_score`.
    pub combined: f64,
    pub error_score: f64,
    pub correct_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub flag: bool,
    /// Present iff `flag`.
    pub candidate: Option<u32>,
    /// Highest-scoring sentence, whether or not it cleared the threshold.
    pub best: Option<SentenceScore>,
}

/// Labelled sentence texts for both SVMs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionTrainingSet {
    pub error_examples: Vec<(String, i8)>,
    pub correct_examples: Vec<(String, i8)>,
    /// Records without gold annotations, ignored.
    pub skipped_unlabelled: usize,
    pub flagged_records: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

fn counts(examples: &[(String, i8)]) -> ClassCounts {
    let positive = examples.iter().filter(|(_, y)| *y > 0).count();
    ClassCounts { positive, negative: examples.len() - positive }
}

impl DetectionTrainingSet {
    pub fn error_counts(&self) -> ClassCounts {
        counts(&self.error_examples)
    }

    pub fn correct_counts(&self) -> ClassCounts {
        counts(&self.correct_examples)
    }
}

/// Derives sentence-level examples for the error and correct SVMs.
///
/// * error SVM: `+1` gold error sentences, `-1` every other sentence.
/// * correct SVM: `+1` every non-error sentence and every gold correction,
///   `-1` gold error sentences.
pub fn build_detection_training_set(records: &[ClinicalRecord]) -> Result<DetectionTrainingSet> {
    let mut set = DetectionTrainingSet::default();
    for rec in records {
        let Some(flag) = rec.gold_flag else {
            set.skipped_unlabelled += 1;
            continue;
        };
        let error_index = if flag { rec.gold_error_index } else { None };
        if flag {
            set.flagged_records += 1;
        }
        for s in &rec.indexed_sentences {
            if Some(i64::from(s.declared_index)) == error_index {
                set.error_examples.push((s.body.clone(), 1));
                set.correct_examples.push((s.body.clone(), -1));
            } else {
                set.error_examples.push((s.body.clone(), -1));
                set.correct_examples.push((s.body.clone(), 1));
            }
        }
        if flag {
            if let Some(c) = rec.gold_corrected_sentence.as_deref().filter(|c| !is_na(c)) {
                set.correct_examples.push((c.to_string(), 1));
            }
        }
    }
    if set.flagged_records == 0 {
        return Err(Error::training(
            "no flagged records: the error SVM would see a single class",
        ));
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorTrainReport {
    pub training_set_error: ClassCounts,
    pub training_set_correct: ClassCounts,
    pub vocabulary_size: usize,
    pub error_svm: TrainReport,
    pub correct_svm: TrainReport,
}

/// Fits the shared TF-IDF model and both SVMs.
pub fn train_detectors(
    records: &[ClinicalRecord],
    config: &DetectorConfig,
) -> Result<(DetectorPair, DetectorTrainReport)> {
    let set = build_detection_training_set(records)?;
    // One document per distinct example text; repeats of a sentence should
    // not inflate its document frequency.
    let mut texts: Vec<&str> = set
        .error_examples
        .iter()
        .chain(&set.correct_examples)
        .map(|(t, _)| t.as_str())
        .collect();
    texts.sort_unstable();
    texts.dedup();
    let docs: Vec<Vec<String>> = texts
        .iter()
        .map(|t| feature_terms(&tokenize(t, config.tfidf.lowercase), &config.tfidf))
        .collect();
    let tfidf = fit_tfidf(&docs, config.tfidf)?;
    let vectorize = |examples: &[(String, i8)]| -> (Vec<SparseVector>, Vec<i8>) {
        examples
            .iter()
            .map(|(t, y)| (tfidf.transform_text(t), *y))
            .unzip()
    };
    let dim = tfidf.dimension();
    let (xe, ye) = vectorize(&set.error_examples);
    let (error_svm, error_report) = train_svm(&xe, &ye, dim, config.error_svm)
        .map_err(|e| Error::training(format!("error SVM: {e}")))?;
    let (xc, yc) = vectorize(&set.correct_examples);
    let (correct_svm, correct_report) = train_svm(&xc, &yc, dim, config.correct_svm)
        .map_err(|e| Error::training(format!("correct SVM: {e}")))?;
    let report = DetectorTrainReport {
        training_set_error: set.error_counts(),
        training_set_correct: set.correct_counts(),
        vocabulary_size: dim,
        error_svm: error_report,
        correct_svm: correct_report,
    };
    let pair = DetectorPair::new(tfidf, error_svm, correct_svm, config.flag_threshold)?;
    Ok((pair, report))
}

impl DetectorPair {
    pub fn new(
        tfidf: TfIdfModel,
        error_svm: LinearSvmModel,
        correct_svm: LinearSvmModel,
        flag_threshold: f64,
    ) -> Result<Self> {
        let dim = tfidf.dimension();
        if error_svm.dimension() != dim || correct_svm.dimension() != dim {
            return Err(Error::validation(format!(
                "SVM dimensions ({}, {}) differ from vocabulary size {dim}",
                error_svm.dimension(),
                correct_svm.dimension()
            )));
        }
        if !flag_threshold.is_finite() {
            return Err(Error::validation("flag threshold must be finite"));
        }
        Ok(DetectorPair { tfidf, error_svm, correct_svm, flag_threshold })
    }

    pub fn score_text(&self, text: &str) -> (f64, f64) {
        let x = self.tfidf.transform_text(text);
        let e = self.error_svm.decision_score(&x).expect("dimension checked at construction");
        let c = self.correct_svm.decision_score(&x).expect("dimension checked at construction");
        (e, c)
    }

    /// One score per sentence, ordered by declared index.
    pub fn score_sentences(&self, sentences: &[IndexedSentence]) -> Vec<SentenceScore> {
        let mut scores: Vec<SentenceScore> = sentences
            .iter()
            .map(|s| {
                let (error_score, correct_score) = self.score_text(&s.body);
                SentenceScore {
                    declared_index: s.declared_index,
                    combined: error_score - correct_score,
                    error_score,
                    correct_score,
                }
            })
            .collect();
        scores.sort_by_key(|s| s.declared_index);
        scores
    }

    pub fn score_record(&self, record: &ClinicalRecord) -> Vec<SentenceScore> {
        self.score_sentences(&record.indexed_sentences)
    }

    /// Flags the paragraph when its best combined score exceeds the threshold;
    /// ties go to the lowest declared index.
    pub fn detect_error(&self, sentences: &[IndexedSentence]) -> Detection {
        self.detect_with_threshold(sentences, self.flag_threshold)
    }

    pub fn detect_with_threshold(&self, sentences: &[IndexedSentence], threshold: f64) -> Detection {
        let best = self
            .score_sentences(sentences)
            .into_iter()
            .fold(None::<SentenceScore>, |best, s| match best {
                Some(b) if b.combined >= s.combined => Some(b),
                _ => Some(s),
            });
        let flag = best.is_some_and(|b| b.combined > threshold);
        Detection {
            flag,
            candidate: if flag { best.map(|b| b.declared_index) } else { None },
            best,
        }
    }

    pub fn detect_record(&self, record: &ClinicalRecord) -> Detection {
        self.detect_error(&record.indexed_sentences)
    }
}
