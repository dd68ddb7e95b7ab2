//! Maps detected sentence text back to the dataset's own sentence numbering.
//!
//! The reported index is the leading integer of the numbered sentence most
//! similar to the detected text (the full integer token, so "12" not "1").

use crate::corpus::IndexedSentence;
use crate::extractive::{prepared_similarity, Prepared};

pub const DEFAULT_FLOOR: f64 = 0.30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexResolution {
    /// `matched_declared_index` when `best_similarity >= floor`, else `-1`.
    pub resolved_index: i64,
    pub best_similarity: f64,
    /// `-1` when there were no sentences.
    pub matched_declared_index: i64,
}

impl IndexResolution {
    pub fn is_resolved(&self) -> bool {
        self.resolved_index >= 0
    }
}

pub fn resolve_index(detected_text: &str, sentences: &[IndexedSentence], floor: f64) -> IndexResolution {
    let query = Prepared::new(detected_text);
    let mut best: Option<(f64, u32)> = None;
    for s in sentences {
        let sim = prepared_similarity(&query, &Prepared::new(&s.body));
        best = match best {
            Some((b, idx)) if b > sim || (b == sim && idx < s.declared_index) => Some((b, idx)),
            _ => Some((sim, s.declared_index)),
        };
    }
    match best {
        None => IndexResolution { resolved_index: -1, best_similarity: 0.0, matched_declared_index: -1 },
        Some((sim, idx)) => IndexResolution {
            resolved_index: if sim >= floor { i64::from(idx) } else { -1 },
            best_similarity: sim,
            matched_declared_index: i64::from(idx),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_numbered_sentences;

    #[test]
    fn exact_body() {
        let s = parse_numbered_sentences("3 Afebrile.\n7 Given aspirin.").unwrap();
        let r = resolve_index("Given aspirin.", &s, DEFAULT_FLOOR);
        assert_eq!((r.resolved_index, r.best_similarity), (7, 1.0));
    }

    #[test]
    fn misspelled_detection() {
        let s = parse_numbered_sentences("0 The patient is stable.\n1 He was given aspirin.").unwrap();
        let r = resolve_index("He was given asprin.", &s, DEFAULT_FLOOR);
        assert_eq!(r.resolved_index, 1);
        // one deletion over 21 characters beats the 3-of-5 token Jaccard
        assert!((r.best_similarity - (1.0 - 1.0 / 21.0)).abs() < 1e-12);
    }

    #[test]
    fn floor_and_empty() {
        let s = parse_numbered_sentences("0 abc\n1 def").unwrap();
        let r = resolve_index("xyz qrs tuv", &s, 0.3);
        assert_eq!(r.resolved_index, -1);
        assert!(r.matched_declared_index >= 0);
        let r = resolve_index("anything", &[], 0.3);
        assert_eq!((r.resolved_index, r.best_similarity), (-1, 0.0));
    }

    #[test]
    fn multi_digit_index() {
        let s = parse_numbered_sentences("11 Afebrile.\n12 Given aspirin.").unwrap();
        assert_eq!(resolve_index("Given aspirin.", &s, 0.3).resolved_index, 12);
    }
}
