//! Scoring for the three subtasks: error flag, error sentence index and the
//! corrected sentence (ROUGE-1 F), plus the aggregate scores.
//!
//! Neural channels (BERTScore, BLEURT) are not computed here. They are merged
//! from external per-item score files keyed by text id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::corpus::{is_na, ClinicalRecord};
use crate::error::{Error, Result};
use crate::textproc::tokenize;

/// ROUGE-1 F over lowercase tokens with clipped unigram overlap.
pub fn rouge1_f(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate, true);
    let refr = tokenize(reference, true);
    match (cand.is_empty(), refr.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, (u32, u32)> = HashMap::new();
    for t in &cand {
        counts.entry(t).or_default().0 += 1;
    }
    for t in &refr {
        counts.entry(t).or_default().1 += 1;
    }
    let overlap: u32 = counts.values().map(|&(c, r)| c.min(r)).sum();
    if overlap == 0 {
        return 0.0;
    }
    let p = f64::from(overlap) / cand.len() as f64;
    let r = f64::from(overlap) / refr.len() as f64;
    2.0 * p * r / (p + r)
}

/// NA convention: both NA scores 1, exactly one NA scores 0.
pub fn na_rule(candidate: &str, reference: &str) -> Option<f64> {
    match (is_na(candidate), is_na(reference)) {
        (true, true) => Some(1.0),
        (true, false) | (false, true) => Some(0.0),
        (false, false) => None,
    }
}

pub fn score_na_aware(candidate: &str, reference: &str) -> f64 {
    na_rule(candidate, reference).unwrap_or_else(|| rouge1_f(candidate, reference))
}

/// One line of a run file: `text_id flag index correction...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEntry {
    pub text_id: String,
    pub flag: bool,
    pub error_index: i64,
    pub corrected_sentence: String,
}

/// Named per-item scores from an external scorer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalScores {
    pub name: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct ExternalLine {
    text_id: String,
    score: f64,
}

impl ExternalScores {
    /// Reads line-delimited `{"text_id": ..., "score": ...}` records.
    ///
    /// Scores are clamped to `[0, 1]`; non-finite scores and repeated ids are
    /// validation errors.
    pub fn read<R: Read>(name: &str, source: R) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for (i, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ExternalLine = serde_json::from_str(&line)
                .map_err(|e| Error::validation(format!("{name} line {}: {e}", i + 1)))?;
            if !rec.score.is_finite() {
                return Err(Error::validation(format!("{name} line {}: non-finite score", i + 1)));
            }
            if scores.insert(rec.text_id.clone(), rec.score.clamp(0.0, 1.0)).is_some() {
                return Err(Error::validation(format!("{name}: duplicate text_id {}", rec.text_id)));
            }
        }
        Ok(ExternalScores { name: name.to_string(), scores })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub text_id: String,
    pub r1f: f64,
    pub flag_hit: bool,
    pub index_hit: bool,
    /// Per-channel scores after the NA convention; first entry is always R1F.
    pub channels: Vec<f64>,
    pub predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub flag_accuracy: f64,
    pub sentence_accuracy: f64,
    pub r1f: f64,
    /// Mean over channels of channel means; present only when at least one
    /// external channel was merged (otherwise it would just repeat `r1f`).
    pub aggregate_score: Option<f64>,
    /// Mean over items of the per-item maximum across channels.
    pub aggregate_c: f64,
    pub channel_names: Vec<String>,
    pub channel_means: Vec<f64>,
    pub n_items: usize,
    pub n_na_pairs: usize,
    pub n_missing_predictions: usize,
    pub per_item: Vec<ItemScore>,
}

/// Scores a run against gold records, aligned by text id.
///
/// A gold record without a prediction counts as wrong on every subtask.
pub fn evaluate_run(
    predictions: &[RunEntry],
    gold: &[ClinicalRecord],
    external: &[ExternalScores],
) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::validation("no gold records to evaluate against"));
    }
    let mut by_id: BTreeMap<&str, &RunEntry> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(&p.text_id, p).is_some() {
            return Err(Error::validation(format!("duplicate text_id {} in predictions", p.text_id)));
        }
    }
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.text_id.as_str()).collect();
    if gold_ids.len() != gold.len() {
        return Err(Error::validation("duplicate text_id in gold records"));
    }
    if let Some(extra) = by_id.keys().find(|id| !gold_ids.contains(*id)) {
        return Err(Error::validation(format!("prediction for unknown text_id {extra}")));
    }
    for ext in external {
        if let Some(extra) = ext.scores.keys().find(|id| !gold_ids.contains(id.as_str())) {
            return Err(Error::validation(format!(
                "external scores {}: unknown text_id {extra}",
                ext.name
            )));
        }
    }

    let mut per_item = Vec::with_capacity(gold.len());
    let mut n_na_pairs = 0;
    let mut n_missing = 0;
    for g in gold {
        let (Some(flag), Some(index)) = (g.gold_flag, g.gold_error_index) else {
            return Err(Error::validation(format!("gold record {} lacks annotations", g.text_id)));
        };
        let reference = g.gold_corrected_sentence.as_deref().unwrap_or(crate::corpus::NA);
        let Some(p) = by_id.get(g.text_id.as_str()) else {
            log::warn!("no prediction for {}; counted wrong", g.text_id);
            n_missing += 1;
            per_item.push(ItemScore {
                text_id: g.text_id.clone(),
                r1f: 0.0,
                flag_hit: false,
                index_hit: false,
                channels: vec![0.0; 1 + external.len()],
                predicted: false,
            });
            continue;
        };
        let na = na_rule(&p.corrected_sentence, reference);
        if is_na(&p.corrected_sentence) && is_na(reference) {
            n_na_pairs += 1;
        }
        let r1f = na.unwrap_or_else(|| rouge1_f(&p.corrected_sentence, reference));
        let mut channels = vec![r1f];
        for ext in external {
            let v = match na {
                Some(v) => v,
                None => *ext.scores.get(&g.text_id).ok_or_else(|| {
                    Error::validation(format!("external scores {}: missing text_id {}", ext.name, g.text_id))
                })?,
            };
            channels.push(v);
        }
        per_item.push(ItemScore {
            text_id: g.text_id.clone(),
            r1f,
            flag_hit: p.flag == flag,
            index_hit: p.error_index == index,
            channels,
            predicted: true,
        });
    }

    let n = per_item.len() as f64;
    let mean = |f: &dyn Fn(&ItemScore) -> f64| per_item.iter().map(f).sum::<f64>() / n;
    let n_channels = 1 + external.len();
    let channel_means: Vec<f64> = (0..n_channels).map(|c| mean(&|i| i.channels[c])).collect();
    let aggregate_score =
        (!external.is_empty()).then(|| channel_means.iter().sum::<f64>() / n_channels as f64);
    let aggregate_c = mean(&|i| i.channels.iter().copied().fold(0.0, f64::max));
    let mut channel_names = vec!["R1F".to_string()];
    channel_names.extend(external.iter().map(|e| e.name.clone()));
    Ok(EvalReport {
        flag_accuracy: mean(&|i| f64::from(u8::from(i.flag_hit))),
        sentence_accuracy: mean(&|i| f64::from(u8::from(i.index_hit))),
        r1f: channel_means[0],
        aggregate_score,
        aggregate_c,
        channel_names,
        channel_means,
        n_items: per_item.len(),
        n_na_pairs,
        n_missing_predictions: n_missing,
        per_item,
    })
}

impl EvalReport {
    /// Human-readable summary.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("items                {}\n", self.n_items));
        out.push_str(&format!("missing predictions  {}\n", self.n_missing_predictions));
        out.push_str(&format!("NA/NA pairs          {}\n", self.n_na_pairs));
        out.push_str(&format!("error flag accuracy  {:.4}\n", self.flag_accuracy));
        out.push_str(&format!("error sentence acc.  {:.4}\n", self.sentence_accuracy));
        for (name, m) in self.channel_names.iter().zip(&self.channel_means) {
            out.push_str(&format!("{:<20} {:.4}\n", name, m));
        }
        match self.aggregate_score {
            Some(a) => out.push_str(&format!("AggregateScore       {a:.4}\n")),
            None => out.push_str("AggregateScore       n/a (no external channels)\n"),
        }
        out.push_str(&format!("AggregateC           {:.4}\n", self.aggregate_c));
        out
    }
}
