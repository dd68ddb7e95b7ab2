//! Tokenization and TF-IDF vectorization.
//!
//! The vocabulary is frozen at fit time and kept in sorted order so that term
//! ids, and therefore every learned feature weight, can be inspected and are
//! reproducible across runs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfIdfConfig {
    pub lowercase: bool,
    pub sublinear_tf: bool,
    pub l2_normalize: bool,
    /// Adds adjacent-token bigram features ("vesicular lesions") when set.
    pub bigrams: bool,
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        TfIdfConfig {
            lowercase: true,
            sublinear_tf: false,
            l2_normalize: true,
            bigrams: false,
        }
    }
}

/// Splits `text` into maximal runs of letters and digits.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            if lowercase {
                current.extend(c.to_lowercase());
            } else {
                current.push(c);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Feature terms for a token list: the tokens themselves, plus bigrams when enabled.
pub fn feature_terms(tokens: &[String], config: &TfIdfConfig) -> Vec<String> {
    let mut terms = tokens.to_vec();
    if config.bigrams {
        terms.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    terms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Sorted terms; a term's position is its id.
    terms: Vec<String>,
    document_frequency: Vec<u32>,
    n_documents: u32,
    #[serde(skip)]
    lookup: BTreeMap<String, u32>,
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, document_frequency: Vec<u32>, n_documents: u32) -> Self {
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            terms,
            document_frequency,
            n_documents,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.lookup.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn document_frequency(&self, id: u32) -> u32 {
        self.document_frequency[id as usize]
    }

    pub fn n_documents(&self) -> u32 {
        self.n_documents
    }

    fn check(&self) -> Result<()> {
        if self.terms.len() != self.document_frequency.len() {
            return Err(Error::ModelFormat("vocabulary/df length mismatch".into()));
        }
        if self.terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ModelFormat("vocabulary terms not strictly sorted".into()));
        }
        if self
            .document_frequency
            .iter()
            .any(|&df| df == 0 || df > self.n_documents)
        {
            return Err(Error::ModelFormat("document frequency out of range".into()));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing term ids and no stored zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from arbitrary pairs: sorts, sums duplicate ids, drops zeros.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(id, _)| id);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (id, w) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == id => last.1 += w,
                _ => entries.push((id, w)),
            }
        }
        entries.retain(|&(_, w)| w != 0.0);
        SparseVector { entries }
    }

    pub fn zero() -> Self {
        SparseVector::default()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, id: u32) -> f64 {
        self.entries
            .binary_search_by_key(&id, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn max_id(&self) -> Option<u32> {
        self.entries.last().map(|&(id, _)| id)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SparseVector::from_pairs(self.entries.iter().map(|&(i, w)| (i, w * factor)).collect())
    }

    pub fn add(&self, other: &SparseVector) -> Self {
        let mut pairs = self.entries.clone();
        pairs.extend_from_slice(&other.entries);
        SparseVector::from_pairs(pairs)
    }

    /// Dot product with a dense vector. Ids beyond `dense` are an error.
    pub fn dot_dense(&self, dense: &[f64]) -> Option<f64> {
        let mut acc = 0.0;
        for &(id, w) in &self.entries {
            acc += w * dense.get(id as usize)?;
        }
        Some(acc)
    }

    pub fn has_nan(&self) -> bool {
        self.entries.iter().any(|(_, w)| !w.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub config: TfIdfConfig,
}

/// Fits vocabulary and smoothed idf, `ln((1 + N) / (1 + df)) + 1`.
///
/// Document frequency counts presence, not multiplicity. `documents` are
/// already-extracted feature terms (see [`feature_terms`]).
pub fn fit_tfidf(documents: &[Vec<String>], config: TfIdfConfig) -> Result<TfIdfModel> {
    if documents.is_empty() {
        return Err(Error::training("cannot fit TF-IDF on an empty document list"));
    }
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for doc in documents {
        let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = documents.len() as u32;
    let (terms, freqs): (Vec<String>, Vec<u32>) =
        df.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    let idf = freqs.iter().map(|&d| smoothed_idf(n, d)).collect();
    Ok(TfIdfModel {
        vocabulary: Vocabulary::from_parts(terms, freqs, n),
        idf,
        config,
    })
}

pub fn smoothed_idf(n_documents: u32, df: u32) -> f64 {
    ((1.0 + f64::from(n_documents)) / (1.0 + f64::from(df))).ln() + 1.0
}

impl TfIdfModel {
    pub fn dimension(&self) -> usize {
        self.vocabulary.len()
    }

    /// Weights a list of feature terms; out-of-vocabulary terms are ignored.
    pub fn transform(&self, terms: &[String]) -> SparseVector {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in terms {
            if let Some(id) = self.vocabulary.id(t) {
                *counts.entry(id).or_default() += 1;
            }
        }
        let mut entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(id, c)| {
                let tf = if self.config.sublinear_tf {
                    (1.0 + f64::from(c)).ln()
                } else {
                    f64::from(c)
                };
                (id, tf * self.idf[id as usize])
            })
            .collect();
        if self.config.l2_normalize {
            let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                entries.iter_mut().for_each(|(_, w)| *w /= norm);
            }
        }
        SparseVector::from_pairs(entries)
    }

    /// Tokenizes raw text with this model's settings and transforms it.
    pub fn transform_text(&self, text: &str) -> SparseVector {
        self.transform(&self.terms(text))
    }

    pub fn terms(&self, text: &str) -> Vec<String> {
        feature_terms(&tokenize(text, self.config.lowercase), &self.config)
    }

    /// Rebuilds lookup tables after deserialization and checks invariants.
    pub fn finish_load(&mut self) -> Result<()> {
        let v = &self.vocabulary;
        self.vocabulary = Vocabulary::from_parts(
            v.terms.clone(),
            v.document_frequency.clone(),
            v.n_documents,
        );
        self.vocabulary.check()?;
        if self.idf.len() != self.vocabulary.len() || self.idf.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::ModelFormat("idf table inconsistent with vocabulary".into()));
        }
        Ok(())
    }
}

/// Turns raw text into a feature vector. Implemented by [`TfIdfModel`]; other
/// engineered feature sets can plug in here.
pub trait Featurizer {
    fn dimension(&self) -> usize;
    fn featurize(&self, text: &str) -> SparseVector;
}

impl Featurizer for TfIdfModel {
    fn dimension(&self) -> usize {
        TfIdfModel::dimension(self)
    }

    fn featurize(&self, text: &str) -> SparseVector {
        self.transform_text(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Scanner written against explicit character classes, independent of `tokenize`.
    fn reference_scan(text: &str) -> Vec<String> {
        let mut out = vec![];
        let mut cur = String::new();
        for ch in text.chars() {
            let word = ch.is_alphabetic() || ch.is_numeric();
            if word {
                for l in ch.to_lowercase() {
                    cur.push(l);
                }
            } else if !cur.is_empty() {
                out.push(cur.clone());
                cur.clear();
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Vesicular lesions on the lips", true),
            toks(&["vesicular", "lesions", "on", "the", "lips"])
        );
        assert!(tokenize("", true).is_empty());
        let t = tokenize("T 39.1°C, HR 110", true);
        assert_eq!(t, toks(&["t", "39", "1", "c", "hr", "110"]));
        assert_eq!(t, reference_scan("T 39.1°C, HR 110"));
        assert_eq!(tokenize("HSV-1", false), toks(&["HSV", "1"]));
    }

    #[test]
    fn idf_two_docs() {
        let docs = vec![toks(&["fever", "cough"]), toks(&["fever", "rash"])];
        let m = fit_tfidf(&docs, TfIdfConfig::default()).unwrap();
        let idf = |t: &str| m.idf[m.vocabulary.id(t).unwrap() as usize];
        assert_eq!(idf("fever"), 1.0);
        let expected = 1.5f64.ln() + 1.0;
        assert!((idf("cough") - expected).abs() < 1e-15);
        assert!((idf("rash") - 1.405465).abs() < 1e-6);
    }

    #[test]
    fn single_doc_idf_is_one() {
        let m = fit_tfidf(&[toks(&["a", "b", "b"])], TfIdfConfig::default()).unwrap();
        assert!(m.idf.iter().all(|&w| w == 1.0));
        assert_eq!(m.vocabulary.document_frequency(m.vocabulary.id("b").unwrap()), 1);
    }

    #[test]
    fn empty_fit_rejected() {
        assert!(fit_tfidf(&[], TfIdfConfig::default()).is_err());
    }

    #[test]
    fn transform_hand_values() {
        let docs = vec![toks(&["fever", "cough"]), toks(&["fever", "rash"])];
        let m = fit_tfidf(&docs, TfIdfConfig::default()).unwrap();
        let v = m.transform(&toks(&["fever", "cough"]));
        let fever = v.get(m.vocabulary.id("fever").unwrap());
        let cough = v.get(m.vocabulary.id("cough").unwrap());
        assert_eq!(format!("{fever:.4}"), "0.5797");
        assert_eq!(format!("{cough:.4}"), "0.8148");
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(m.transform(&toks(&["zzz"])).is_zero());
        assert_eq!(v, m.transform(&toks(&["fever", "cough"])));
    }

    #[test]
    fn bigrams_and_sublinear() {
        let cfg = TfIdfConfig { bigrams: true, sublinear_tf: true, l2_normalize: false, ..Default::default() };
        let terms = feature_terms(&toks(&["vesicular", "lesions", "lips"]), &cfg);
        assert!(terms.contains(&"vesicular lesions".to_string()));
        let m = fit_tfidf(std::slice::from_ref(&terms), cfg).unwrap();
        let v = m.transform(&toks(&["lips", "lips"]));
        assert!((v.entries()[0].1 - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sparse_from_pairs_canonical() {
        let v = SparseVector::from_pairs(vec![(3, 1.0), (1, 2.0), (3, -1.0), (2, 0.0)]);
        assert_eq!(v.entries(), &[(1, 2.0)]);
        assert_eq!(v.dot_dense(&[0.0, 3.0]), Some(6.0));
        assert_eq!(SparseVector::from_pairs(vec![(5, 1.0)]).dot_dense(&[1.0]), None);
    }
}
