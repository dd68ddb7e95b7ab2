//! Extractive correction: find the training paragraph pair the input most
//! resembles and lift its gold correction.
//!
//! Matching is paragraph-first, then sentence-confirm: a paragraph match makes
//! the pair a candidate, and its correction is used only when the detected
//! sentence is close to the pair's annotated error sentence.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{is_na, ClinicalRecord};
use crate::error::{Error, Result};
use crate::textproc::tokenize;

/// Number of lowest-document-frequency query tokens used to gather candidates.
pub const RARE_TOKENS: usize = 10;

/// Lowercases and collapses whitespace runs to a single space.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Levenshtein distance over any symbol sequence (characters, tokens).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance if it is at most `max`, else `None`.
///
/// Only the diagonal band of width `2 * max + 1` is evaluated, and the scan stops
/// as soon as every cell in a row exceeds `max`.
pub fn levenshtein_bounded(a: &[char], b: &[char], max: usize) -> Option<usize> {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if a.len() - b.len() > max {
        return None;
    }
    if b.is_empty() {
        return Some(a.len());
    }
    let inf = usize::MAX / 2;
    let width = b.len() + 1;
    let mut prev = vec![inf; width];
    let mut cur = vec![inf; width];
    for (j, p) in prev.iter_mut().enumerate().take(max.min(b.len()) + 1) {
        *p = j;
    }
    for i in 1..=a.len() {
        let lo = i.saturating_sub(max).max(1);
        let hi = (i + max).min(b.len());
        cur.iter_mut().for_each(|c| *c = inf);
        cur[0] = if i <= max { i } else { inf };
        let mut row_min = cur[0];
        for j in lo..=hi {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if row_min > max {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= max).then_some(d)
}

/// Pre-normalized text with the pieces similarity needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub normalized: String,
    #[serde(skip)]
    chars: Vec<char>,
    #[serde(skip)]
    tokens: BTreeSet<String>,
}

impl Prepared {
    pub fn new(text: &str) -> Self {
        let normalized = normalize(text);
        Prepared::from_normalized(normalized)
    }

    fn from_normalized(normalized: String) -> Self {
        let chars = normalized.chars().collect();
        let tokens = tokenize(&normalized, true).into_iter().collect();
        Prepared { normalized, chars, tokens }
    }

    fn rehydrate(&mut self) {
        *self = Prepared::from_normalized(std::mem::take(&mut self.normalized));
    }

    pub fn tokens(&self) -> &BTreeSet<String> {
        &self.tokens
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

fn edit_similarity(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// Fuzzy similarity in `[0, 1]`: the larger of normalized edit similarity and
/// token-set Jaccard.
pub fn similarity(a: &str, b: &str) -> f64 {
    prepared_similarity(&Prepared::new(a), &Prepared::new(b))
}

pub fn prepared_similarity(a: &Prepared, b: &Prepared) -> f64 {
    edit_similarity(&a.chars, &b.chars).max(jaccard(&a.tokens, &b.tokens))
}

/// Similarity if it can reach `floor`, otherwise `None`.
///
/// Uses the banded edit distance, so near-duplicate checks on long paragraphs
/// cost O(band * length) rather than O(length^2).
pub fn similarity_at_least(a: &Prepared, b: &Prepared, floor: f64) -> Option<f64> {
    let token_sim = jaccard(&a.tokens, &b.tokens);
    let longest = a.chars.len().max(b.chars.len());
    if longest == 0 {
        return Some(1.0);
    }
    // edit_sim >= floor  <=>  distance <= (1 - floor) * longest
    let budget = ((1.0 - floor).max(0.0) * longest as f64 + 1e-9).floor() as usize;
    let edit_sim = levenshtein_bounded(&a.chars, &b.chars, budget)
        .map(|d| 1.0 - d as f64 / longest as f64);
    let best = edit_sim.map_or(token_sim, |e| e.max(token_sim));
    (best >= floor).then_some(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub text_id: String,
    pub paragraph: Prepared,
    /// Normalized bodies of every numbered sentence, in declared order.
    pub sentences: Vec<String>,
    pub gold_error_index: i64,
    /// Raw (unnormalized) error sentence.
    pub gold_error_sentence: String,
    pub gold_corrected_sentence: String,
}

/// Flagged training pairs with an inverted token index over their paragraphs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingPairIndex {
    entries: Vec<PairEntry>,
    /// token -> sorted, duplicate-free entry ids.
    postings: BTreeMap<String, Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub matched_text_id: String,
    pub paragraph_similarity: f64,
    /// The matched pair's annotated error sentence.
    pub error_sentence: String,
    pub proposed_correction: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedCorrection {
    pub matched_text_id: String,
    pub paragraph_similarity: f64,
    pub sentence_similarity: f64,
    pub correction: String,
}

impl TrainingPairIndex {
    /// Indexes records with `gold_flag = true`, a resolvable error sentence and a
    /// non-NA correction; everything else is skipped.
    pub fn build(records: &[ClinicalRecord]) -> Self {
        let mut entries = Vec::new();
        for r in records {
            let Some(err) = r.gold_error_sentence() else { continue };
            let Some(corr) = r.gold_corrected_sentence.as_deref().filter(|c| !is_na(c)) else {
                continue;
            };
            entries.push(PairEntry {
                text_id: r.text_id.clone(),
                paragraph: Prepared::new(&r.text),
                sentences: r.indexed_sentences.iter().map(|s| normalize(&s.body)).collect(),
                gold_error_index: i64::from(err.declared_index),
                gold_error_sentence: err.body.clone(),
                gold_corrected_sentence: corr.to_string(),
            });
        }
        let mut index = TrainingPairIndex { entries, postings: BTreeMap::new() };
        index.rebuild_postings();
        index
    }

    fn rebuild_postings(&mut self) {
        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (id, e) in self.entries.iter().enumerate() {
            for t in e.paragraph.tokens() {
                postings.entry(t.clone()).or_default().push(id as u32);
            }
        }
        self.postings = postings;
    }

    /// Restores derived fields after deserialization and checks postings.
    pub fn finish_load(&mut self) -> Result<()> {
        let stored = std::mem::take(&mut self.postings);
        self.entries.iter_mut().for_each(|e| e.paragraph.rehydrate());
        self.rebuild_postings();
        if stored != self.postings {
            return Err(Error::ModelFormat("pair index postings do not match entries".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }

    pub fn postings(&self, token: &str) -> &[u32] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    /// Entry ids sharing at least one of the query's rarest indexed tokens.
    pub fn candidates(&self, query: &Prepared) -> Vec<u32> {
        let mut rare: Vec<(usize, &str)> = query
            .tokens()
            .iter()
            .filter_map(|t| self.postings.get(t).map(|p| (p.len(), t.as_str())))
            .collect();
        rare.sort_unstable();
        let mut ids: Vec<u32> = rare
            .iter()
            .take(RARE_TOKENS)
            .flat_map(|(_, t)| self.postings[*t].iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Best-matching flagged pair with paragraph similarity `>= min_similarity`.
    /// Ties go to the lexicographically smallest text id.
    pub fn best_training_match(&self, paragraph: &str, min_similarity: f64) -> Option<MatchResult> {
        let query = Prepared::new(paragraph);
        let mut best: Option<(f64, &PairEntry)> = None;
        for id in self.candidates(&query) {
            let entry = &self.entries[id as usize];
            let floor = best.map_or(min_similarity, |(s, _)| s.max(min_similarity));
            let Some(sim) = similarity_at_least(&query, &entry.paragraph, floor) else {
                continue;
            };
            best = match best {
                Some((s, e)) if s > sim || (s == sim && e.text_id <= entry.text_id) => Some((s, e)),
                _ => Some((sim, entry)),
            };
        }
        best.map(|(sim, e)| e.to_match(sim))
    }

    /// Exhaustive scan without the token filter; reference path for tests and audits.
    pub fn best_match_full_scan(&self, paragraph: &str, min_similarity: f64) -> Option<MatchResult> {
        let query = Prepared::new(paragraph);
        let mut best: Option<(f64, &PairEntry)> = None;
        for entry in &self.entries {
            let sim = prepared_similarity(&query, &entry.paragraph);
            if sim < min_similarity {
                continue;
            }
            best = match best {
                Some((s, e)) if s > sim || (s == sim && e.text_id <= entry.text_id) => Some((s, e)),
                _ => Some((sim, entry)),
            };
        }
        best.map(|(sim, e)| e.to_match(sim))
    }
}

impl PairEntry {
    fn to_match(&self, sim: f64) -> MatchResult {
        MatchResult {
            matched_text_id: self.text_id.clone(),
            paragraph_similarity: sim,
            error_sentence: self.gold_error_sentence.clone(),
            proposed_correction: self.gold_corrected_sentence.clone(),
        }
    }
}

/// Returns the matched pair's gold correction when the detected sentence is
/// close enough to the pair's error sentence.
pub fn extract_correction(
    m: &MatchResult,
    detected_sentence: &str,
    min_sentence_similarity: f64,
) -> Option<ExtractedCorrection> {
    let sentence_similarity = similarity(detected_sentence, &m.error_sentence);
    (sentence_similarity >= min_sentence_similarity).then(|| ExtractedCorrection {
        matched_text_id: m.matched_text_id.clone(),
        paragraph_similarity: m.paragraph_similarity,
        sentence_similarity,
        correction: m.proposed_correction.clone(),
    })
}
