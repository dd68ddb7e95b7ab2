use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clinfix_core::synth::{generate, SynthConfig};
use clinfix_core::{
    evaluate_run, parse_dataset, read_run, run_pipeline, train_pipeline, write_dataset, write_run,
    ClinicalRecord, ColumnSchema, CorrectionBackend, EvalReport, Error, ExternalScores, FallbackBackend,
    HttpBackend, Pipeline, PipelineConfig, PipelineModelFile, Prediction, ProvenanceCounts, RunEntry,
    RunMode,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::settings::Settings;
use crate::{AblateArgs, EvaluateArgs, PredictArgs, Serving, SynthArgs, TrainArgs};

const DEFAULT_TIMEOUT_SECS: f64 = 30.0;

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_schema(schema: Option<&Path>, data: &Path) -> Result<ColumnSchema> {
    match schema {
        Some(p) => {
            let raw = fs::read_to_string(p).with_context(|| format!("reading schema {}", p.display()))?;
            Ok(toml::from_str(&raw).map_err(|e| Error::Schema(format!("{}: {e}", p.display())))?)
        }
        None if data.extension().is_some_and(|e| e == "jsonl") => Ok(ColumnSchema::json_lines()),
        None => Ok(ColumnSchema::default()),
    }
}

/// Reads a dataset; rejected rows are fatal unless `allow_rejects`.
fn load_records(
    path: &Path,
    schema: Option<&Path>,
    allow_rejects: bool,
    reject_report: Option<&Path>,
) -> Result<Vec<ClinicalRecord>> {
    let schema = load_schema(schema, path)?;
    let parsed = parse_dataset(open(path)?, &schema).with_context(|| format!("reading {}", path.display()))?;
    if !parsed.rejects.is_empty() {
        match reject_report {
            Some(p) => {
                let mut w = create(p)?;
                parsed.write_rejects(&mut w)?;
                w.flush()?;
            }
            None => {
                for r in &parsed.rejects {
                    eprintln!("rejected row {}: {}", r.row_number, r.reason);
                }
            }
        }
        if !allow_rejects {
            return Err(Error::validation(format!(
                "{}: {} of {} rows rejected (use --allow-rejects to skip them)",
                path.display(),
                parsed.rejects.len(),
                parsed.row_count()
            ))
            .into());
        }
        log::warn!("{}: skipping {} rejected rows", path.display(), parsed.rejects.len());
    }
    Ok(parsed.records)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let settings = a.common.settings(Settings { seed: a.seed, ..Default::default() })?;
    let records = load_records(&a.train, a.common.schema.as_deref(), a.common.allow_rejects, a.rejects.as_deref())?;
    let mut config = PipelineConfig::default();
    settings.apply_training(&mut config);
    let (pipeline, report) = train_pipeline(&records, &config)?;

    let d = &report.detector;
    println!("records             {}", report.n_records);
    println!("flagged             {}", report.n_flagged);
    println!(
        "error SVM examples  {} positive / {} negative",
        d.training_set_error.positive, d.training_set_error.negative
    );
    println!(
        "correct SVM examples {} positive / {} negative",
        d.training_set_correct.positive, d.training_set_correct.negative
    );
    println!("vocabulary          {} terms", d.vocabulary_size);
    println!("indexed pairs       {}", report.n_indexed_pairs);
    println!("epoch  error-svm objective  correct-svm objective");
    for (i, (e, c)) in d.error_svm.epoch_objectives.iter().zip(&d.correct_svm.epoch_objectives).enumerate() {
        println!("{:>5}  {:>19.6}  {:>21.6}", i + 1, e, c);
    }

    let file = PipelineModelFile { pipeline, config };
    let bytes = file.to_bytes()?;
    let mut w = create(&a.out)?;
    w.write_all(&bytes)?;
    w.flush()?;
    println!("model written to {} ({} bytes)", a.out.display(), bytes.len());
    Ok(())
}

fn load_model(path: &Path, settings: &Settings) -> Result<Pipeline> {
    let file = PipelineModelFile::read(open(path)?).with_context(|| format!("loading model {}", path.display()))?;
    let mut config = file.config;
    settings.apply_prediction(&mut config);
    let mut pipeline = file.pipeline;
    pipeline.detectors.flag_threshold = config.detector.flag_threshold;
    pipeline.routing = config.routing;
    Ok(pipeline)
}

fn serving_settings(s: &Serving) -> Settings {
    Settings {
        backend_url: s.backend_url.clone(),
        jobs: s.jobs,
        timeout_secs: s.timeout,
        ..Default::default()
    }
}

/// The HTTP backend when one is configured and healthy, else copy-through.
fn make_backend(settings: &Settings, needed: bool) -> Box<dyn CorrectionBackend> {
    let url = match (&settings.backend_url, needed) {
        (Some(u), true) if !u.trim().is_empty() => u,
        (_, true) => {
            log::warn!("no backend URL configured; using the copy-through fallback");
            return Box::new(FallbackBackend);
        }
        (_, false) => return Box::new(FallbackBackend),
    };
    let secs = settings.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS).max(0.001);
    let backend = HttpBackend::new(url, Duration::from_secs_f64(secs), settings.jobs.unwrap_or(1));
    match backend.health() {
        Ok(()) => Box::new(backend),
        Err(e) => {
            log::warn!("backend {url} unavailable ({e}); using the copy-through fallback");
            Box::new(FallbackBackend)
        }
    }
}

fn predict_all(
    pipeline: &Pipeline,
    backend: &dyn CorrectionBackend,
    records: &[ClinicalRecord],
    mode: RunMode,
    jobs: Option<usize>,
) -> Result<Vec<Prediction>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(1).max(1))
        .build()
        .context("starting worker pool")?;
    // Indexed parallel iterators collect in input order.
    Ok(pool.install(|| {
        records
            .par_iter()
            .map(|r| run_pipeline(pipeline, backend, r, mode))
            .collect()
    }))
}

fn write_run_file(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let entries: Vec<RunEntry> = predictions.iter().map(RunEntry::from).collect();
    let mut w = create(path)?;
    write_run(&entries, &mut w)?;
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let settings = a
        .common
        .settings(Settings { mode: a.mode, ..serving_settings(&a.serving) })?;
    let pipeline = load_model(&a.model, &settings)?;
    let records = load_records(&a.input, a.common.schema.as_deref(), a.common.allow_rejects, None)?;
    let mode = settings.mode.unwrap_or(RunMode::QaWithResolver);
    let backend = make_backend(&settings, mode.uses_backend());
    let predictions = predict_all(&pipeline, backend.as_ref(), &records, mode, settings.jobs)?;
    write_run_file(&a.out, &predictions)?;
    println!("mode {mode}: {} predictions written to {}", predictions.len(), a.out.display());
    println!("provenance {}", ProvenanceCounts::tally(&predictions));
    Ok(())
}

fn parse_external(spec: &str) -> Result<ExternalScores> {
    let Some((name, path)) = spec.split_once('=').filter(|(n, p)| !n.is_empty() && !p.is_empty()) else {
        bail!(Error::validation(format!("--external expects NAME=PATH, got {spec:?}")));
    };
    let scores = ExternalScores::read(name, open(Path::new(path))?)
        .with_context(|| format!("reading external scores {path}"))?;
    Ok(scores)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let run = read_run(open(&a.run)?).with_context(|| format!("reading run {}", a.run.display()))?;
    let gold = load_records(&a.gold, a.schema.as_deref(), a.allow_rejects, None)?;
    let external = a.external.iter().map(|s| parse_external(s)).collect::<Result<Vec<_>>>()?;
    let report = evaluate_run(&run, &gold, &external)?;
    print!("{}", report.render());
    let path = a.report.unwrap_or_else(|| {
        let mut p = a.run.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write_json(&path, &report)?;
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    mode: RunMode,
    r1f: f64,
    flag_accuracy: f64,
    sentence_accuracy: f64,
    provenance: ProvenanceCounts,
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let settings = a.common.settings(serving_settings(&a.serving))?;
    let pipeline = load_model(&a.model, &settings)?;
    let schema = a.common.schema.as_deref();
    let records = load_records(&a.input, schema, a.common.allow_rejects, None)?;
    let gold = match &a.gold {
        Some(p) => load_records(p, schema, a.common.allow_rejects, None)?,
        None => records.clone(),
    };
    let backend = make_backend(&settings, true);
    let mut rows = Vec::new();
    for mode in RunMode::ALL {
        let predictions = predict_all(&pipeline, backend.as_ref(), &records, mode, settings.jobs)?;
        if let Some(dir) = &a.out_dir {
            write_run_file(&dir.join(format!("{mode}.run")), &predictions)?;
        }
        let entries: Vec<RunEntry> = predictions.iter().map(RunEntry::from).collect();
        let report: EvalReport = evaluate_run(&entries, &gold, &[])?;
        rows.push(AblationRow {
            mode,
            r1f: report.r1f,
            flag_accuracy: report.flag_accuracy,
            sentence_accuracy: report.sentence_accuracy,
            provenance: ProvenanceCounts::tally(&predictions),
        });
    }
    println!("{:<18} {:>7} {:>9} {:>13}   provenance", "mode", "R1F", "flag acc", "sentence acc");
    for r in &rows {
        println!(
            "{:<18} {:>7.4} {:>9.4} {:>13.4}   {}",
            r.mode.to_string(),
            r.r1f,
            r.flag_accuracy,
            r.sentence_accuracy,
            r.provenance
        );
    }
    let diff = rows[1].r1f - rows[0].r1f;
    println!("R1F qa - extractive_only: {diff:+.4}");
    println!(
        "sentence acc qa_with_resolver - qa: {:+.4}",
        rows[2].sentence_accuracy - rows[1].sentence_accuracy
    );
    if let Some(p) = &a.report {
        write_json(p, &rows)?;
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        seed: a.seed,
        n_train: a.n_train,
        n_test: a.n_test,
        flagged_fraction: a.flagged_fraction,
        near_duplicate_fraction: a.near_duplicate_fraction,
        shuffle_indices: a.shuffle_indices,
    };
    let corpus = generate(&config);
    let schema = ColumnSchema::default();
    for (name, records) in [("train.csv", &corpus.train), ("test.csv", &corpus.test)] {
        let mut w = create(&a.out_dir.join(name))?;
        write_dataset(records, &schema, &mut w)?;
        w.flush()?;
    }
    let mut w = create(&a.out_dir.join("labels.jsonl"))?;
    for l in corpus.train_labels.iter().chain(&corpus.test_labels) {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    println!(
        "wrote {} training and {} test records to {}",
        corpus.train.len(),
        corpus.test.len(),
        a.out_dir.display()
    );
    Ok(())
}
