//! Correction routing: detection, then extraction from a matched training pair,
//! then (mode permitting) an abstractive backend, then copy-through fallback.

use std::fmt;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_na, split_paragraph, ClinicalRecord, IndexedSentence, NA};
use crate::detect::DetectorPair;
use crate::error::{Error, Result};
use crate::extractive::{extract_correction, levenshtein, normalize, TrainingPairIndex};
use crate::indexing::resolve_index;

pub const DEFAULT_QUESTION_TEMPLATE: &str = "What single word in this sentence is medically incorrect, \
and what should it be? Sentence: {error_sentence} Context: {context}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub context: String,
    pub question: String,
    pub error_sentence: String,
}

impl CorrectionRequest {
    /// Builds a request; `error_sentence` must occur in `context` up to case and
    /// whitespace. `{error_sentence}` and `{context}` in the template are filled in.
    pub fn new(context: &str, error_sentence: &str, template: &str) -> Result<Self> {
        if !normalize(context).contains(&normalize(error_sentence)) {
            return Err(Error::validation("error sentence does not occur in its context"));
        }
        let question = template
            .replace("{error_sentence}", error_sentence)
            .replace("{context}", context);
        Ok(CorrectionRequest {
            context: context.to_string(),
            question,
            error_sentence: error_sentence.to_string(),
        })
    }
}

/// Wire response of a correction backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendAnswer {
    pub corrected_sentence: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    /// A model that proposes corrections.
    Abstractive,
    /// Returns the input unchanged; its answers are reported as fallback.
    CopyThrough,
}

pub trait CorrectionBackend: Send + Sync {
    fn kind(&self) -> BackendKind {
        BackendKind::Abstractive
    }

    fn correct(&self, request: &CorrectionRequest) -> Result<BackendAnswer>;
}

/// Copy-through backend: always available, never invents text.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackBackend;

impl CorrectionBackend for FallbackBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::CopyThrough
    }

    fn correct(&self, request: &CorrectionRequest) -> Result<BackendAnswer> {
        Ok(BackendAnswer { corrected_sentence: request.error_sentence.clone(), confidence: 0.0 })
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.slots.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// JSON-over-HTTP client for a remote correction service
/// (`POST /correct`, `GET /health`).
pub struct HttpBackend {
    base_url: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

#[derive(Debug, Deserialize)]
struct Health {
    status: String,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration, max_in_flight: usize) -> Self {
        HttpBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            in_flight: InFlight { slots: Mutex::new(max_in_flight.max(1)), freed: Condvar::new() },
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// `GET /health` must answer 200 with `{"status":"ok"}`.
    pub fn health(&self) -> Result<()> {
        let resp = self
            .agent
            .get(&format!("{}/health", self.base_url))
            .call()
            .map_err(|e| Error::Backend(format!("health probe failed: {e}")))?;
        let h: Health = resp
            .into_json()
            .map_err(|e| Error::Backend(format!("health probe: bad body: {e}")))?;
        if h.status != "ok" {
            return Err(Error::Backend(format!("health probe: status {:?}", h.status)));
        }
        Ok(())
    }
}

impl CorrectionBackend for HttpBackend {
    fn correct(&self, request: &CorrectionRequest) -> Result<BackendAnswer> {
        let _slot = self.in_flight.acquire();
        let resp = self
            .agent
            .post(&format!("{}/correct", self.base_url))
            .send_json(request)
            .map_err(|e| Error::Backend(e.to_string()))?;
        let answer: BackendAnswer = resp
            .into_json()
            .map_err(|e| Error::Backend(format!("malformed response: {e}")))?;
        if !(0.0..=1.0).contains(&answer.confidence) {
            return Err(Error::Backend(format!("confidence {} outside [0, 1]", answer.confidence)));
        }
        Ok(answer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Extractive,
    Abstractive,
    Fallback,
    None,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Extractive => "extractive",
            Provenance::Abstractive => "abstractive",
            Provenance::Fallback => "fallback",
            Provenance::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub text_id: String,
    pub flag: bool,
    /// `-1` when `flag` is false.
    pub error_index: i64,
    /// `"NA"` when `flag` is false.
    pub corrected_sentence: String,
    pub provenance: Provenance,
    pub confidence: f64,
}

impl Prediction {
    pub fn negative(text_id: &str) -> Self {
        Prediction {
            text_id: text_id.to_string(),
            flag: false,
            error_index: -1,
            corrected_sentence: NA.to_string(),
            provenance: Provenance::None,
            confidence: 0.0,
        }
    }

    /// Checks the flag / index / NA / provenance consistency rules.
    pub fn check(&self) -> std::result::Result<(), String> {
        let negatives = [
            !self.flag,
            self.error_index == -1,
            is_na(&self.corrected_sentence),
            self.provenance == Provenance::None,
        ];
        if negatives.iter().any(|&b| b != negatives[0]) {
            return Err(format!("inconsistent prediction {self:?}"));
        }
        if self.flag && (self.corrected_sentence.trim().is_empty() || self.error_index < 0) {
            return Err(format!("flagged prediction lacks a correction or index: {self:?}"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        Ok(())
    }
}

/// Which table-row variant of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Extraction, else copy-through; index resolved against numbered sentences.
    ExtractiveOnly,
    /// Extraction, else backend; index is the naive split position.
    Qa,
    /// Extraction, else backend; index resolved against numbered sentences.
    QaWithResolver,
}

impl RunMode {
    pub const ALL: [RunMode; 3] = [RunMode::ExtractiveOnly, RunMode::Qa, RunMode::QaWithResolver];

    pub fn uses_backend(self) -> bool {
        self != RunMode::ExtractiveOnly
    }

    pub fn resolves_index(self) -> bool {
        self != RunMode::Qa
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::ExtractiveOnly => "extractive_only",
            RunMode::Qa => "qa",
            RunMode::QaWithResolver => "qa_with_resolver",
        })
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extractive_only" => Ok(RunMode::ExtractiveOnly),
            "qa" => Ok(RunMode::Qa),
            "qa_with_resolver" => Ok(RunMode::QaWithResolver),
            other => Err(Error::validation(format!(
                "unknown mode {other:?} (expected extractive_only, qa or qa_with_resolver)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingConfig {
    /// Paragraph similarity needed to consider a training pair.
    pub min_similarity: f64,
    /// Sentence similarity needed to lift the pair's correction.
    pub min_sentence_similarity: f64,
    /// Similarity floor for index resolution.
    pub index_floor: f64,
    /// Backend outputs differing from the input by more tokens are rejected.
    pub max_edit_tokens: usize,
    pub question_template: String,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            min_similarity: 0.85,
            min_sentence_similarity: 0.60,
            index_floor: crate::indexing::DEFAULT_FLOOR,
            max_edit_tokens: 2,
            question_template: DEFAULT_QUESTION_TEMPLATE.to_string(),
        }
    }
}

/// Token-level edit distance over whitespace-separated tokens.
pub fn token_edit_count(a: &str, b: &str) -> usize {
    let ta: Vec<&str> = a.split_whitespace().collect();
    let tb: Vec<&str> = b.split_whitespace().collect();
    levenshtein(&ta, &tb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub sentence: String,
    pub confidence: f64,
    pub provenance: Provenance,
}

fn copy_through(request: &CorrectionRequest) -> Correction {
    Correction {
        sentence: request.error_sentence.clone(),
        confidence: 0.0,
        provenance: Provenance::Fallback,
    }
}

/// Asks `backend` for a correction and enforces the edit budget. Any backend
/// failure or rejected answer degrades to copy-through.
pub fn correct_abstractive(
    backend: &dyn CorrectionBackend,
    request: &CorrectionRequest,
    max_edit_tokens: usize,
) -> Correction {
    if backend.kind() == BackendKind::CopyThrough {
        return copy_through(request);
    }
    let answer = match backend.correct(request) {
        Ok(a) => a,
        Err(e) => {
            log::warn!("correction backend failed, using fallback: {e}");
            return copy_through(request);
        }
    };
    let sentence = answer.corrected_sentence.trim();
    if sentence.is_empty() || is_na(sentence) || sentence.contains('\n') {
        log::debug!("backend answer rejected: not a single sentence");
        return copy_through(request);
    }
    if !(0.0..=1.0).contains(&answer.confidence) {
        log::debug!("backend answer rejected: confidence {}", answer.confidence);
        return copy_through(request);
    }
    let edits = token_edit_count(&request.error_sentence, sentence);
    if edits > max_edit_tokens {
        log::debug!("backend answer rejected: {edits} token edits > {max_edit_tokens}");
        return copy_through(request);
    }
    Correction {
        sentence: sentence.to_string(),
        confidence: answer.confidence,
        provenance: Provenance::Abstractive,
    }
}

/// Everything prediction needs, minus the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub detectors: DetectorPair,
    pub pair_index: TrainingPairIndex,
    pub routing: RoutingConfig,
}

/// Naive sentence view of a record: split positions become indices.
fn naive_sentences(record: &ClinicalRecord) -> Vec<IndexedSentence> {
    let mut segments = split_paragraph(&record.text);
    if segments.is_empty() {
        segments = record.indexed_sentences.iter().map(|s| s.body.clone()).collect();
    }
    segments
        .into_iter()
        .enumerate()
        .map(|(i, body)| IndexedSentence { declared_index: i as u32, char_span: 0..0, body })
        .collect()
}

fn context_of(record: &ClinicalRecord) -> String {
    if record.text.trim().is_empty() {
        record
            .indexed_sentences
            .iter()
            .map(|s| s.body.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        record.text.clone()
    }
}

/// Runs detection and correction for one record.
///
/// Detection scores the naive split of the paragraph. The reported index is
/// either the split position (`Qa`) or the resolved dataset index; a detection
/// that resolves to no numbered sentence is reported as no error.
pub fn run_pipeline(
    pipeline: &Pipeline,
    backend: &dyn CorrectionBackend,
    record: &ClinicalRecord,
    mode: RunMode,
) -> Prediction {
    let routing = &pipeline.routing;
    let view = naive_sentences(record);
    let detection = pipeline.detectors.detect_error(&view);
    let Some(position) = detection.candidate else {
        return Prediction::negative(&record.text_id);
    };
    let detected = &view[position as usize].body;
    let error_index = if mode.resolves_index() {
        let res = resolve_index(detected, &record.indexed_sentences, routing.index_floor);
        if !res.is_resolved() {
            log::debug!("{}: detection did not resolve (best {:.3})", record.text_id, res.best_similarity);
            return Prediction::negative(&record.text_id);
        }
        res.resolved_index
    } else {
        i64::from(position)
    };

    let extracted = pipeline
        .pair_index
        .best_training_match(&record.text, routing.min_similarity)
        .and_then(|m| extract_correction(&m, detected, routing.min_sentence_similarity));
    let correction = match extracted {
        Some(x) => Correction {
            sentence: x.correction,
            confidence: x.sentence_similarity.clamp(0.0, 1.0),
            provenance: Provenance::Extractive,
        },
        None => {
            let context = context_of(record);
            match CorrectionRequest::new(&context, detected, &routing.question_template) {
                Ok(req) if mode.uses_backend() => {
                    correct_abstractive(backend, &req, routing.max_edit_tokens)
                }
                Ok(req) => copy_through(&req),
                Err(e) => {
                    log::warn!("{}: {e}; copying sentence through", record.text_id);
                    Correction { sentence: detected.clone(), confidence: 0.0, provenance: Provenance::Fallback }
                }
            }
        }
    };
    if is_na(&correction.sentence) || correction.sentence.trim().is_empty() {
        return Prediction::negative(&record.text_id);
    }
    Prediction {
        text_id: record.text_id.clone(),
        flag: true,
        error_index,
        corrected_sentence: correction.sentence,
        provenance: correction.provenance,
        confidence: correction.confidence,
    }
}

/// Counts of predictions by provenance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProvenanceCounts {
    pub extractive: usize,
    pub abstractive: usize,
    pub fallback: usize,
    pub none: usize,
}

impl ProvenanceCounts {
    pub fn tally<'a>(predictions: impl IntoIterator<Item = &'a Prediction>) -> Self {
        let mut c = ProvenanceCounts::default();
        for p in predictions {
            match p.provenance {
                Provenance::Extractive => c.extractive += 1,
                Provenance::Abstractive => c.abstractive += 1,
                Provenance::Fallback => c.fallback += 1,
                Provenance::None => c.none += 1,
            }
        }
        c
    }
}

impl fmt::Display for ProvenanceCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "extractive={} abstractive={} fallback={} none={}",
            self.extractive, self.abstractive, self.fallback, self.none
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(&'static str, f64);

    impl CorrectionBackend for Fixed {
        fn correct(&self, _: &CorrectionRequest) -> Result<BackendAnswer> {
            Ok(BackendAnswer { corrected_sentence: self.0.into(), confidence: self.1 })
        }
    }

    struct Broken;

    impl CorrectionBackend for Broken {
        fn correct(&self, _: &CorrectionRequest) -> Result<BackendAnswer> {
            Err(Error::Backend("timed out".into()))
        }
    }

    const VIGNETTE: &str = "A 5-year-old male presents with vesicular lesions on the lips. \
Patient is diagnosed with an [MASK] infection.";

    fn masked() -> CorrectionRequest {
        CorrectionRequest::new(VIGNETTE, "Patient is diagnosed with an [MASK] infection.", DEFAULT_QUESTION_TEMPLATE)
            .unwrap()
    }

    #[test]
    fn fallback_copies_through() {
        let c = correct_abstractive(&FallbackBackend, &masked(), 2);
        assert_eq!(c.sentence, "Patient is diagnosed with an [MASK] infection.");
        assert_eq!((c.confidence, c.provenance), (0.0, Provenance::Fallback));
    }

    #[test]
    fn one_token_edit_accepted() {
        let backend = Fixed("Patient is diagnosed with an HSV-1 infection.", 0.8);
        let c = correct_abstractive(&backend, &masked(), 2);
        assert_eq!(c.provenance, Provenance::Abstractive);
        assert_eq!(c.sentence, "Patient is diagnosed with an HSV-1 infection.");
        assert_eq!(token_edit_count(&masked().error_sentence, &c.sentence), 1);
    }

    #[test]
    fn rewrite_rejected() {
        let rewrite = "The child clearly has herpetic gingivostomatitis today.";
        assert_eq!(token_edit_count(&masked().error_sentence, rewrite), 7);
        let c = correct_abstractive(&Fixed(rewrite, 0.9), &masked(), 2);
        assert_eq!(c.provenance, Provenance::Fallback);
    }

    #[test]
    fn failures_degrade() {
        assert_eq!(correct_abstractive(&Broken, &masked(), 2).provenance, Provenance::Fallback);
        assert_eq!(correct_abstractive(&Fixed("  ", 0.5), &masked(), 2).provenance, Provenance::Fallback);
        assert_eq!(correct_abstractive(&Fixed("NA", 0.5), &masked(), 2).provenance, Provenance::Fallback);
    }

    #[test]
    fn request_requires_containment() {
        assert!(CorrectionRequest::new("Some context.", "Other sentence.", "{error_sentence}").is_err());
        let r = CorrectionRequest::new("A  b. C d.", "c D.", "Q: {error_sentence} | {context}").unwrap();
        assert_eq!(r.question, "Q: c D. | A  b. C d.");
        assert!(masked().question.contains("Sentence: Patient is diagnosed"));
    }

    #[test]
    fn mode_round_trip() {
        for m in RunMode::ALL {
            assert_eq!(m.to_string().parse::<RunMode>().unwrap(), m);
        }
        assert!("bogus".parse::<RunMode>().is_err());
    }

    #[test]
    fn prediction_check() {
        assert!(Prediction::negative("x").check().is_ok());
        let mut p = Prediction::negative("x");
        p.error_index = 3;
        assert!(p.check().is_err());
    }
}
