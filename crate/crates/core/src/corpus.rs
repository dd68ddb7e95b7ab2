//! Dataset ingestion: paired-paragraph clinical records with pre-numbered sentences.
//!
//! Each input row carries a paragraph, the dataset's own numbered sentence list
//! and (for labelled splits) the gold error flag, the declared index of the
//! erroneous sentence and its correction. Rows that break the record invariants
//! are collected in a rejects list together with the reason; they are never
//! dropped silently.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel used by the dataset for "no correction".
pub const NA: &str = "NA";

/// True when `s` is the no-correction sentinel (trimmed, case-insensitive).
pub fn is_na(s: &str) -> bool {
    s.trim().eq_ignore_ascii_case(NA)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedSentence {
    /// Integer prefix the dataset assigned to this sentence.
    pub declared_index: u32,
    /// Sentence text without the numeric prefix; continuation lines joined by one space.
    pub body: String,
    /// Byte offsets of the entry (prefix through last continuation) in the raw field.
    pub char_span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub text_id: String,
    pub text: String,
    pub indexed_sentences: Vec<IndexedSentence>,
    pub gold_flag: Option<bool>,
    /// `-1` when the record has no error.
    pub gold_error_index: Option<i64>,
    /// `"NA"` when the record has no error.
    pub gold_corrected_sentence: Option<String>,
    pub gold_corrected_text: Option<String>,
}

impl ClinicalRecord {
    /// The sentence carrying `declared_index`, if any.
    pub fn sentence(&self, declared_index: i64) -> Option<&IndexedSentence> {
        self.indexed_sentences
            .iter()
            .find(|s| i64::from(s.declared_index) == declared_index)
    }

    /// Gold error sentence for flagged records.
    pub fn gold_error_sentence(&self) -> Option<&IndexedSentence> {
        match (self.gold_flag, self.gold_error_index) {
            (Some(true), Some(idx)) => self.sentence(idx),
            _ => None,
        }
    }

    pub fn is_labelled(&self) -> bool {
        self.gold_flag.is_some()
    }

    /// Checks the record-level invariants; returns the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.text.trim().is_empty() && self.indexed_sentences.is_empty() {
            return Err("non-empty text has no numbered sentences".into());
        }
        let mut seen = BTreeSet::new();
        for s in &self.indexed_sentences {
            if !seen.insert(s.declared_index) {
                return Err(format!("duplicate sentence index {}", s.declared_index));
            }
            if s.body.trim().is_empty() {
                return Err(format!("sentence {} has an empty body", s.declared_index));
            }
        }
        match self.gold_flag {
            Some(false) => {
                if self.gold_error_index != Some(-1) {
                    return Err(format!(
                        "error flag is 0 but error index is {}",
                        fmt_opt(self.gold_error_index)
                    ));
                }
                match &self.gold_corrected_sentence {
                    Some(c) if is_na(c) => {}
                    other => {
                        return Err(format!(
                            "error flag is 0 but corrected sentence is {:?}",
                            other.as_deref().unwrap_or("")
                        ))
                    }
                }
            }
            Some(true) => {
                let idx = self
                    .gold_error_index
                    .ok_or_else(|| "error flag is 1 but error index is missing".to_string())?;
                let hits = self
                    .indexed_sentences
                    .iter()
                    .filter(|s| i64::from(s.declared_index) == idx)
                    .count();
                if hits != 1 {
                    return Err(format!(
                        "error flag is 1 but error index {idx} matches {hits} numbered sentences"
                    ));
                }
            }
            None => {}
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<i64>) -> String {
    v.map_or_else(|| "missing".to_string(), |v| v.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Delimiter-separated values with a header row.
    #[default]
    Delimited,
    /// One JSON object per line.
    JsonLines,
}

/// Maps logical record fields onto input column names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub format: DatasetFormat,
    pub delimiter: char,
    pub text_id: String,
    pub text: String,
    pub sentences: String,
    pub error_flag: String,
    pub error_sentence_id: String,
    pub corrected_sentence: String,
    pub corrected_text: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            format: DatasetFormat::Delimited,
            delimiter: ',',
            text_id: "Text ID".into(),
            text: "Text".into(),
            sentences: "Sentences".into(),
            error_flag: "Error Flag".into(),
            error_sentence_id: "Error Sentence ID".into(),
            corrected_sentence: "Corrected Sentence".into(),
            corrected_text: "Corrected Text".into(),
        }
    }
}

impl ColumnSchema {
    pub fn json_lines() -> Self {
        ColumnSchema {
            format: DatasetFormat::JsonLines,
            ..Default::default()
        }
    }

    fn delimiter_byte(&self) -> Result<u8> {
        if self.delimiter.is_ascii() {
            Ok(self.delimiter as u8)
        } else {
            Err(Error::Schema(format!(
                "delimiter {:?} is not a single ASCII character",
                self.delimiter
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based data row (header excluded).
    pub row_number: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedDataset {
    pub records: Vec<ClinicalRecord>,
    pub rejects: Vec<Reject>,
}

impl ParsedDataset {
    pub fn row_count(&self) -> usize {
        self.records.len() + self.rejects.len()
    }

    /// Writes the rejects as line-delimited `{row_number, reason}` objects.
    pub fn write_rejects<W: Write>(&self, mut sink: W) -> Result<()> {
        for r in &self.rejects {
            serde_json::to_writer(&mut sink, r)?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Raw string fields of one row, keyed by logical field.
#[derive(Default)]
struct RawRow {
    text_id: Option<String>,
    text: Option<String>,
    sentences: Option<String>,
    error_flag: Option<String>,
    error_sentence_id: Option<String>,
    corrected_sentence: Option<String>,
    corrected_text: Option<String>,
}

/// Parses a dataset stream into records plus rejects.
///
/// Missing mandatory columns (`text_id`, `text`, `sentences`) are a schema error
/// for the whole input; everything row-local becomes a [`Reject`].
pub fn parse_dataset<R: Read>(source: R, schema: &ColumnSchema) -> Result<ParsedDataset> {
    let rows = match schema.format {
        DatasetFormat::Delimited => read_delimited(source, schema)?,
        DatasetFormat::JsonLines => read_json_lines(source, schema)?,
    };
    let mut out = ParsedDataset::default();
    for (i, row) in rows.into_iter().enumerate() {
        let row_number = i + 1;
        match row.and_then(build_record) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejects.push(Reject { row_number, reason }),
        }
    }
    Ok(out)
}

type RowResult = std::result::Result<RawRow, String>;

fn read_delimited<R: Read>(source: R, schema: &ColumnSchema) -> Result<Vec<RowResult>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| col(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let text_id = required(&schema.text_id)?;
    let text = required(&schema.text)?;
    let sentences = required(&schema.sentences)?;
    let flag = col(&schema.error_flag);
    let index = col(&schema.error_sentence_id);
    let corrected = col(&schema.corrected_sentence);
    let corrected_text = col(&schema.corrected_text);

    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                rows.push(Err(format!("unreadable row: {e}")));
                continue;
            }
        };
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).map(str::to_string);
        rows.push(Ok(RawRow {
            text_id: get(Some(text_id)),
            text: get(Some(text)),
            sentences: get(Some(sentences)),
            error_flag: get(flag),
            error_sentence_id: get(index),
            corrected_sentence: get(corrected),
            corrected_text: get(corrected_text),
        }));
    }
    Ok(rows)
}

fn read_json_lines<R: Read>(source: R, schema: &ColumnSchema) -> Result<Vec<RowResult>> {
    let reader = BufReader::new(source);
    let mut rows = Vec::new();
    let mut checked_columns = false;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, serde_json::Value> = match serde_json::from_str(&line) {
            Ok(o) => o,
            Err(e) => {
                rows.push(Err(format!("malformed JSON record: {e}")));
                continue;
            }
        };
        if !checked_columns {
            for name in [&schema.text_id, &schema.text, &schema.sentences] {
                if !obj.contains_key(name) {
                    return Err(Error::MissingColumn(name.clone()));
                }
            }
            checked_columns = true;
        }
        let get = |name: &str| obj.get(name).and_then(json_scalar);
        rows.push(Ok(RawRow {
            text_id: get(&schema.text_id),
            text: get(&schema.text),
            sentences: get(&schema.sentences),
            error_flag: get(&schema.error_flag),
            error_sentence_id: get(&schema.error_sentence_id),
            corrected_sentence: get(&schema.corrected_sentence),
            corrected_text: get(&schema.corrected_text),
        }));
    }
    Ok(rows)
}

fn json_scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Bool(b) => Some(if *b { "1" } else { "0" }.to_string()),
        other => Some(other.to_string()),
    }
}

fn non_empty(v: Option<String>) -> Option<String> {
    v.filter(|s| !s.trim().is_empty())
}

fn parse_flag(raw: &str) -> std::result::Result<bool, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" => Ok(true),
        "0" | "0.0" | "false" | "no" => Ok(false),
        other => Err(format!("unparseable error flag {other:?}")),
    }
}

fn parse_index(raw: &str) -> std::result::Result<i64, String> {
    let t = raw.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Ok(v);
    }
    // Spreadsheet exports sometimes write integral floats ("4.0").
    match t.parse::<f64>() {
        Ok(f) if f.fract() == 0.0 && f.is_finite() => Ok(f as i64),
        _ => Err(format!("unparseable error sentence index {t:?}")),
    }
}

fn build_record(row: RawRow) -> std::result::Result<ClinicalRecord, String> {
    let text_id = non_empty(row.text_id)
        .map(|s| s.trim().to_string())
        .ok_or("missing text id")?;
    let text = row.text.unwrap_or_default();
    let indexed_sentences =
        parse_numbered_sentences(row.sentences.as_deref().unwrap_or("")).map_err(|e| match e {
            Error::Validation(m) => m,
            other => other.to_string(),
        })?;
    let gold_flag = non_empty(row.error_flag)
        .map(|f| parse_flag(&f))
        .transpose()?;
    let mut gold_error_index = non_empty(row.error_sentence_id)
        .map(|i| parse_index(&i))
        .transpose()?;
    let mut gold_corrected_sentence = non_empty(row.corrected_sentence).map(|c| {
        if is_na(&c) {
            NA.to_string()
        } else {
            c.trim().to_string()
        }
    });
    if gold_flag == Some(false) {
        gold_error_index.get_or_insert(-1);
        gold_corrected_sentence.get_or_insert_with(|| NA.to_string());
    }
    let rec = ClinicalRecord {
        text_id,
        text,
        indexed_sentences,
        gold_flag,
        gold_error_index,
        gold_corrected_sentence,
        gold_corrected_text: non_empty(row.corrected_text),
    };
    rec.validate()?;
    Ok(rec)
}

/// Serializes records back to the tabular layout described by `schema`.
pub fn write_dataset<W: Write>(records: &[ClinicalRecord], schema: &ColumnSchema, sink: W) -> Result<()> {
    let fields = |r: &ClinicalRecord| -> [String; 7] {
        [
            r.text_id.clone(),
            r.text.clone(),
            render_numbered_sentences(&r.indexed_sentences),
            r.gold_flag.map(|f| if f { "1" } else { "0" }.to_string()).unwrap_or_default(),
            r.gold_error_index.map(|i| i.to_string()).unwrap_or_default(),
            r.gold_corrected_sentence.clone().unwrap_or_default(),
            r.gold_corrected_text.clone().unwrap_or_default(),
        ]
    };
    let names = [
        &schema.text_id,
        &schema.text,
        &schema.sentences,
        &schema.error_flag,
        &schema.error_sentence_id,
        &schema.corrected_sentence,
        &schema.corrected_text,
    ];
    match schema.format {
        DatasetFormat::Delimited => {
            let mut w = csv::WriterBuilder::new()
                .delimiter(schema.delimiter_byte()?)
                .from_writer(sink);
            w.write_record(names)?;
            for r in records {
                w.write_record(fields(r))?;
            }
            w.flush()?;
        }
        DatasetFormat::JsonLines => {
            let mut sink = sink;
            for r in records {
                let obj: BTreeMap<&str, String> = names
                    .iter()
                    .map(|n| n.as_str())
                    .zip(fields(r))
                    .collect();
                serde_json::to_writer(&mut sink, &obj)?;
                sink.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Canonical `"<index> <body>"` lines joined by newlines.
pub fn render_numbered_sentences(sentences: &[IndexedSentence]) -> String {
    sentences
        .iter()
        .map(|s| format!("{} {}", s.declared_index, s.body))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits a leading integer token off `line`, returning `(index, rest)`.
fn leading_index(line: &str) -> Option<(u32, &str)> {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &line[digits..];
    if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
        return None;
    }
    line[..digits].parse().ok().map(|i| (i, rest))
}

/// Parses the dataset's numbered sentence field.
///
/// Every line starting with an integer token opens a new sentence. Lines without
/// one are continuations and are appended (space-joined) to the previous body.
pub fn parse_numbered_sentences(raw: &str) -> Result<Vec<IndexedSentence>> {
    let mut out: Vec<IndexedSentence> = Vec::new();
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        let lead = content.len() - content.trim_start().len();
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let span_start = start + lead;
        let span_end = span_start + trimmed.len();
        match leading_index(trimmed) {
            Some((idx, rest)) => {
                let body = rest.trim();
                if body.is_empty() {
                    return Err(Error::validation(format!("sentence {idx} has an empty body")));
                }
                out.push(IndexedSentence {
                    declared_index: idx,
                    body: body.to_string(),
                    char_span: span_start..span_end,
                });
            }
            None => {
                let prev = out.last_mut().ok_or_else(|| {
                    Error::validation("continuation line before the first numbered sentence")
                })?;
                prev.body.push(' ');
                prev.body.push_str(trimmed);
                prev.char_span.end = span_end;
            }
        }
    }
    let mut seen = BTreeSet::new();
    let dups: BTreeSet<u32> = out
        .iter()
        .filter(|s| !seen.insert(s.declared_index))
        .map(|s| s.declared_index)
        .collect();
    if !dups.is_empty() {
        let list: Vec<String> = dups.iter().map(u32::to_string).collect();
        return Err(Error::validation(format!(
            "duplicate sentence indices: {}",
            list.join(", ")
        )));
    }
    Ok(out)
}

/// Naive sentence splitter: newlines when present, otherwise `.` followed by whitespace.
pub fn split_paragraph(text: &str) -> Vec<String> {
    if text.contains('\n') {
        return text
            .lines()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
    }
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c == '.' && chars.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            out.push(&text[start..=i]);
            start = i + 1;
        }
    }
    out.push(&text[start..]);
    out.into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[IndexedSentence]) -> Vec<(u32, &str)> {
        v.iter().map(|s| (s.declared_index, s.body.as_str())).collect()
    }

    #[test]
    fn numbered_two_lines() {
        let s = parse_numbered_sentences("0 The patient is stable.\n1 He was given aspirin.").unwrap();
        assert_eq!(pairs(&s), vec![(0, "The patient is stable."), (1, "He was given aspirin.")]);
        assert_eq!(s[1].char_span, 25..48);
    }

    #[test]
    fn numbered_empty() {
        assert!(parse_numbered_sentences("").unwrap().is_empty());
    }

    #[test]
    fn numbered_continuation() {
        // Trace: "0 BP 90/62" opens sentence 0; "mmHg noted." has no integer
        // token, so it is appended to sentence 0; "1 Afebrile." opens sentence 1.
        let raw = "0 BP 90/62\nmmHg noted.\n1 Afebrile.";
        let s = parse_numbered_sentences(raw).unwrap();
        assert_eq!(pairs(&s), vec![(0, "BP 90/62 mmHg noted."), (1, "Afebrile.")]);
        assert_eq!(&raw[s[0].char_span.clone()], "0 BP 90/62\nmmHg noted.");
    }

    #[test]
    fn numbered_duplicates_listed() {
        let err = parse_numbered_sentences("0 a\n1 b\n0 c\n1 d\n2 e").unwrap_err();
        assert!(err.to_string().contains("0, 1"), "{err}");
    }

    #[test]
    fn numbered_leading_continuation_is_error() {
        assert!(parse_numbered_sentences("no number\n0 a").is_err());
    }

    #[test]
    fn digit_glued_to_word_is_not_an_index() {
        let s = parse_numbered_sentences("0 Dose\n5mg daily.").unwrap();
        assert_eq!(pairs(&s), vec![(0, "Dose 5mg daily.")]);
    }

    #[test]
    fn split_periods() {
        assert_eq!(split_paragraph("A. B. C."), vec!["A.", "B.", "C."]);
    }

    #[test]
    fn split_newlines() {
        assert_eq!(split_paragraph("line1\nline2"), vec!["line1", "line2"]);
    }

    #[test]
    fn split_newline_precedence() {
        // Newline present, so period splitting is never consulted.
        assert_eq!(split_paragraph("S1. S2.\nS3."), vec!["S1. S2.", "S3."]);
    }

    #[test]
    fn split_keeps_decimals() {
        assert_eq!(
            split_paragraph("T 39.1°C noted. Stable."),
            vec!["T 39.1°C noted.", "Stable."]
        );
        assert!(split_paragraph("").is_empty());
        assert!(split_paragraph("  \n \n").is_empty());
    }

    const HEADER: &str = "Text ID,Text,Sentences,Error Flag,Error Sentence ID,Corrected Sentence\n";

    #[test]
    fn three_good_rows() {
        let data = format!(
            "{HEADER}a,Stable.,0 Stable.,0,-1,NA\n\
             b,\"He took asprin. Fine.\",\"0 He took asprin.\n1 Fine.\",1,0,He took aspirin.\n\
             c,Ok.,0 Ok.,,,\n"
        );
        let parsed = parse_dataset(data.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert!(parsed.rejects.is_empty());
        let b = &parsed.records[1];
        assert_eq!(b.gold_error_sentence().unwrap().body, "He took asprin.");
        assert_eq!(parsed.records[2].gold_flag, None);
    }

    #[test]
    fn flag_index_conflict_rejected() {
        let data = format!("{HEADER}a,Stable.,0 Stable.,0,4,NA\n");
        let parsed = parse_dataset(data.as_bytes(), &ColumnSchema::default()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.rejects.len(), 1);
        assert_eq!(parsed.rejects[0].row_number, 1);
        assert!(parsed.rejects[0].reason.contains("error flag is 0"));
    }

    #[test]
    fn na_normalized_and_defaults_filled() {
        let data = format!("{HEADER}a,Stable.,0 Stable.,0,, na \n");
        let parsed = parse_dataset(data.as_bytes(), &ColumnSchema::default()).unwrap();
        let r = &parsed.records[0];
        assert_eq!(r.gold_error_index, Some(-1));
        assert_eq!(r.gold_corrected_sentence.as_deref(), Some("NA"));
    }

    #[test]
    fn missing_column_named() {
        let data = "Text ID,Text\na,b\n";
        match parse_dataset(data.as_bytes(), &ColumnSchema::default()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "Sentences"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_lines_and_tab_delimiter() {
        let jl = "{\"Text ID\":\"x\",\"Text\":\"A.\",\"Sentences\":\"0 A.\",\"Error Flag\":0,\"Error Sentence ID\":-1}\n";
        let parsed = parse_dataset(jl.as_bytes(), &ColumnSchema::json_lines()).unwrap();
        assert_eq!(parsed.records[0].gold_flag, Some(false));

        let schema = ColumnSchema { delimiter: '\t', ..Default::default() };
        let tsv = "Text ID\tText\tSentences\ny\tB.\t0 B.\n";
        let parsed = parse_dataset(tsv.as_bytes(), &schema).unwrap();
        assert_eq!(parsed.records[0].text_id, "y");
    }

    #[test]
    fn rejects_written_as_json_lines() {
        let data = format!("{HEADER}a,Stable.,0 Stable.,1,3,x\n");
        let parsed = parse_dataset(data.as_bytes(), &ColumnSchema::default()).unwrap();
        let mut buf = Vec::new();
        parsed.write_rejects(&mut buf).unwrap();
        let line: Reject = serde_json::from_slice(buf.trim_ascii_end()).unwrap();
        assert_eq!(line.row_number, 1);
    }
}
