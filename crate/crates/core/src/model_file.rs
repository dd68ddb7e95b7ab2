//! Versioned, checksummed pipeline model file.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic            5 bytes   "MFCQ1"
//! format_version   u32
//! section_count    u32
//! section*         tag: 4 ASCII bytes, length: u64, payload: JSON
//! checksum         32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! Sections, in order: `TFID` (TF-IDF model), `ESVM` (error SVM), `CSVM`
//! (correct SVM), `PIDX` (training pair index), `CONF` (config snapshot).
//! Serialization is deterministic: save -> load -> save yields the same bytes.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::correct::Pipeline;
use crate::detect::DetectorPair;
use crate::error::{Error, Result};
use crate::extractive::TrainingPairIndex;
use crate::pipeline::PipelineConfig;
use crate::svm::LinearSvmModel;
use crate::textproc::TfIdfModel;

pub const MAGIC: &[u8; 5] = b"MFCQ1";
pub const FORMAT_VERSION: u32 = 1;
const TAGS: [&[u8; 4]; 5] = [b"TFID", b"ESVM", b"CSVM", b"PIDX", b"CONF"];

/// A trained pipeline together with the configuration it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModelFile {
    pub pipeline: Pipeline,
    pub config: PipelineConfig,
}

fn section<T: Serialize>(out: &mut Vec<u8>, tag: &[u8; 4], value: &T) -> Result<()> {
    let payload = serde_json::to_vec(value)?;
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::ModelFormat("truncated model file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn section<T: DeserializeOwned>(&mut self, tag: &[u8; 4]) -> Result<T> {
        let got = self.take(4)?;
        if got != tag {
            return Err(Error::ModelFormat(format!(
                "expected section {}, found {}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(got)
            )));
        }
        let len = usize::try_from(self.u64()?)
            .map_err(|_| Error::ModelFormat("section length overflow".into()))?;
        serde_json::from_slice(self.take(len)?).map_err(|e| {
            Error::ModelFormat(format!("section {}: {e}", String::from_utf8_lossy(tag)))
        })
    }
}

impl PipelineModelFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(TAGS.len() as u32).to_le_bytes());
        let p = &self.pipeline;
        section(&mut out, TAGS[0], &p.detectors.tfidf)?;
        section(&mut out, TAGS[1], &p.detectors.error_svm)?;
        section(&mut out, TAGS[2], &p.detectors.correct_svm)?;
        section(&mut out, TAGS[3], &p.pair_index)?;
        section(&mut out, TAGS[4], &self.config)?;
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::ModelFormat("not a pipeline model file (bad magic)".into()));
        }
        let mut cur = Cursor { buf: bytes, pos: MAGIC.len() };
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "model format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let (body, stored) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != stored {
            return Err(Error::ModelFormat("checksum mismatch".into()));
        }
        let mut cur = Cursor { buf: body, pos: cur.pos };
        let count = cur.u32()?;
        if count as usize != TAGS.len() {
            return Err(Error::ModelFormat(format!("expected {} sections, found {count}", TAGS.len())));
        }
        let mut tfidf: TfIdfModel = cur.section(TAGS[0])?;
        let error_svm: LinearSvmModel = cur.section(TAGS[1])?;
        let correct_svm: LinearSvmModel = cur.section(TAGS[2])?;
        let mut pair_index: TrainingPairIndex = cur.section(TAGS[3])?;
        let config: PipelineConfig = cur.section(TAGS[4])?;
        if cur.pos != body.len() {
            return Err(Error::ModelFormat("trailing bytes after last section".into()));
        }
        tfidf.finish_load()?;
        pair_index.finish_load()?;
        let detectors =
            DetectorPair::new(tfidf, error_svm, correct_svm, config.detector.flag_threshold)
                .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let pipeline = Pipeline { detectors, pair_index, routing: config.routing.clone() };
        Ok(PipelineModelFile { pipeline, config })
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(&self.to_bytes()?)?;
        sink.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut source: R) -> Result<Self> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
