use std::fs::File;

use clinfix_core::corpus::{parse_numbered_sentences, render_numbered_sentences};
use clinfix_core::{parse_dataset, write_dataset, ClinicalRecord, ColumnSchema, IndexedSentence};
use proptest::prelude::*;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ten_rows.csv");

/// Row-by-row check written against the raw CSV cells, independent of the
/// ingestion code: a row is good when its flag/index/correction agree and the
/// flagged index names exactly one numbered line.
fn oracle_counts(path: &str) -> (usize, usize) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let (mut good, mut bad) = (0, 0);
    for row in rdr.records() {
        let row = row.unwrap();
        let sentences = &row[2];
        let flag = &row[3];
        let index = &row[4];
        let correction = &row[5];
        let starts: Vec<&str> = sentences
            .lines()
            .filter_map(|l| {
                let l = l.trim();
                let d = l.find(|c: char| !c.is_ascii_digit()).unwrap_or(l.len());
                (d > 0).then(|| &l[..d])
            })
            .collect();
        let ok = match flag {
            "0" => index == "-1" && correction == "NA",
            "1" => starts.iter().filter(|s| **s == index).count() == 1,
            _ => false,
        };
        if ok {
            good += 1;
        } else {
            bad += 1;
        }
    }
    (good, bad)
}

#[test]
fn ten_row_fixture_counts() {
    let (good, bad) = oracle_counts(FIXTURE);
    assert_eq!((good, bad), (8, 2));
    let parsed = parse_dataset(File::open(FIXTURE).unwrap(), &ColumnSchema::default()).unwrap();
    assert_eq!(parsed.records.len(), good);
    assert_eq!(parsed.rejects.len(), bad);
    assert_eq!(parsed.row_count(), 10);
    let rows: Vec<usize> = parsed.rejects.iter().map(|r| r.row_number).collect();
    assert_eq!(rows, vec![4, 9]);
    let r03 = parsed.records.iter().find(|r| r.text_id == "r03").unwrap();
    assert_eq!(r03.indexed_sentences[0].body, "BP 90/62 mmHg noted.");
    let r10 = parsed.records.iter().find(|r| r.text_id == "r10").unwrap();
    assert_eq!(r10.indexed_sentences[0].body, "T 39.1°C, HR 110.");
}

#[test]
fn rejects_report_is_json_lines() {
    let parsed = parse_dataset(File::open(FIXTURE).unwrap(), &ColumnSchema::default()).unwrap();
    let mut out = Vec::new();
    parsed.write_rejects(&mut out).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["row_number"], 4);
    assert!(lines[0]["reason"].as_str().unwrap().contains("error index"));
}

#[test]
fn unreadable_stream_is_io_error() {
    struct Broken;
    impl std::io::Read for Broken {
        fn read(&mut self, _: &mut [u8]) -> std::io::Result<usize> {
            Err(std::io::Error::other("disk on fire"))
        }
    }
    let err = parse_dataset(Broken, &ColumnSchema::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

fn body() -> impl Strategy<Value = String> {
    // Starts with a letter so it never looks like a numeric prefix.
    "[A-Za-z][A-Za-z0-9 ,;°μ/.-]{0,30}".prop_map(|s| s.trim().to_string())
}

fn record() -> impl Strategy<Value = ClinicalRecord> {
    (
        "[a-z0-9-]{1,10}",
        prop::collection::btree_set(0u32..40, 1..6),
        prop::collection::vec(body(), 6),
        any::<prop::sample::Index>(),
        prop::option::of(body()),
    )
        .prop_map(|(id, idx, bodies, pick, correction)| {
            let indexed_sentences: Vec<IndexedSentence> = idx
                .iter()
                .zip(&bodies)
                .map(|(&i, b)| IndexedSentence { declared_index: i, body: b.clone(), char_span: 0..0 })
                .collect();
            let indexed_sentences = parse_numbered_sentences(&render_numbered_sentences(&indexed_sentences)).unwrap();
            let text = indexed_sentences.iter().map(|s| s.body.as_str()).collect::<Vec<_>>().join(" ");
            let (flag, index, corr) = match correction {
                Some(c) => {
                    let s = &indexed_sentences[pick.index(indexed_sentences.len())];
                    (true, i64::from(s.declared_index), c)
                }
                None => (false, -1, "NA".to_string()),
            };
            ClinicalRecord {
                text_id: id,
                text: text.clone(),
                indexed_sentences,
                gold_flag: Some(flag),
                gold_error_index: Some(index),
                gold_corrected_sentence: Some(corr),
                gold_corrected_text: Some(text),
            }
        })
}

proptest! {
    #[test]
    fn dataset_round_trip(records in prop::collection::vec(record(), 0..6), jsonl in any::<bool>()) {
        let schema = if jsonl { ColumnSchema::json_lines() } else { ColumnSchema::default() };
        let mut buf = Vec::new();
        write_dataset(&records, &schema, &mut buf).unwrap();
        let parsed = parse_dataset(buf.as_slice(), &schema).unwrap();
        prop_assert!(parsed.rejects.is_empty(), "{:?}", parsed.rejects);
        prop_assert_eq!(parsed.records, records);
    }

    /// Bodies plus stripped prefixes account for every non-whitespace character.
    #[test]
    fn numbered_parse_conserves_characters(
        lines in prop::collection::vec((prop::option::of(0u32..1000), body()), 1..8)
    ) {
        let mut lines = lines;
        if lines[0].0.is_none() {
            lines[0].0 = Some(0);
        }
        let mut seen = std::collections::BTreeSet::new();
        lines.retain(|(i, _)| i.is_none_or(|i| seen.insert(i)));
        let raw: String = lines
            .iter()
            .map(|(i, b)| match i {
                Some(i) => format!("{i} {b}"),
                None => b.clone(),
            })
            .collect::<Vec<_>>()
            .join("\n");
        let parsed = parse_numbered_sentences(&raw).unwrap();
        let count = |s: &str| s.chars().filter(|c| !c.is_whitespace()).count();
        let reassembled: usize = parsed
            .iter()
            .map(|s| count(&s.declared_index.to_string()) + count(&s.body))
            .sum();
        prop_assert_eq!(reassembled, count(&raw));
        for s in &parsed {
            prop_assert!(raw[s.char_span.clone()].starts_with(&s.declared_index.to_string()));
        }
    }

    #[test]
    fn records_plus_rejects_equal_rows(flags in prop::collection::vec((0u8..3, -2i64..4), 1..12)) {
        let mut csv = String::from("Text ID,Text,Sentences,Error Flag,Error Sentence ID,Corrected Sentence\n");
        for (i, (flag, idx)) in flags.iter().enumerate() {
            csv.push_str(&format!("t{i},A. B.,\"0 A.\n1 B.\",{flag},{idx},Fixed.\n"));
        }
        let parsed = parse_dataset(csv.as_bytes(), &ColumnSchema::default()).unwrap();
        prop_assert_eq!(parsed.row_count(), flags.len());
    }
}
