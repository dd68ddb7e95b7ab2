//! Run files: one header-less line per record, `text_id flag index correction...`.
//!
//! `flag` is `0` or `1`; for `0` the index is `-1` and the correction is `NA`.
//! The correction runs to the end of the line, so it may contain spaces but
//! never tabs or newlines (those are replaced by spaces on write).

use std::io::{BufRead, BufReader, Read, Write};

use crate::correct::Prediction;
use crate::error::{Error, Result};
use crate::metrics::RunEntry;

impl From<&Prediction> for RunEntry {
    fn from(p: &Prediction) -> Self {
        RunEntry {
            text_id: p.text_id.clone(),
            flag: p.flag,
            error_index: p.error_index,
            corrected_sentence: p.corrected_sentence.clone(),
        }
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
        .collect::<String>()
        .trim()
        .to_string()
}

pub fn format_run_line(entry: &RunEntry) -> Result<String> {
    if entry.text_id.is_empty() || entry.text_id.chars().any(char::is_whitespace) {
        return Err(Error::validation(format!(
            "text id {:?} cannot be written to a run file (empty or contains whitespace)",
            entry.text_id
        )));
    }
    Ok(format!(
        "{} {} {} {}",
        entry.text_id,
        u8::from(entry.flag),
        entry.error_index,
        sanitize(&entry.corrected_sentence)
    ))
}

pub fn write_run<'a, W: Write>(entries: impl IntoIterator<Item = &'a RunEntry>, mut sink: W) -> Result<()> {
    for e in entries {
        sink.write_all(format_run_line(e)?.as_bytes())?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn parse_run_line(line: &str) -> std::result::Result<RunEntry, String> {
    let mut parts = line.splitn(4, ' ');
    let text_id = parts.next().filter(|s| !s.is_empty()).ok_or("missing text id")?;
    let flag = match parts.next() {
        Some("0") => false,
        Some("1") => true,
        other => return Err(format!("flag must be 0 or 1, got {other:?}")),
    };
    let error_index: i64 = parts
        .next()
        .ok_or("missing index")?
        .parse()
        .map_err(|e| format!("bad index: {e}"))?;
    let corrected_sentence = parts.next().unwrap_or("").to_string();
    Ok(RunEntry { text_id: text_id.to_string(), flag, error_index, corrected_sentence })
}

pub fn read_run<R: Read>(source: R) -> Result<Vec<RunEntry>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_run_line(line).map_err(|e| Error::validation(format!("run line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
