use clinfix_core::extractive::levenshtein;
use clinfix_core::{
    fit_tfidf, predict_records, similarity, tokenize, train_pipeline, train_svm, FallbackBackend, PipelineConfig,
    RunMode, SvmConfig, TfIdfConfig, TrainingPairIndex,
};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn edit_distance(c: &mut Criterion) {
    let corpus = clinfix_bench::corpus();
    let (a, b) = (&corpus.test[0].text, &corpus.train[0].text);
    let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    c.bench_function("levenshtein/paragraph", |bench| bench.iter(|| levenshtein(black_box(&ac), black_box(&bc))));
    c.bench_function("similarity/paragraph", |bench| bench.iter(|| similarity(black_box(a), black_box(b))));
}

fn features(c: &mut Criterion) {
    let corpus = clinfix_bench::corpus();
    let docs: Vec<Vec<String>> = corpus
        .train
        .iter()
        .flat_map(|r| r.indexed_sentences.iter().map(|s| tokenize(&s.body, true)))
        .collect();
    let model = fit_tfidf(&docs, TfIdfConfig::default()).unwrap();
    c.bench_function("tfidf/fit", |bench| bench.iter(|| fit_tfidf(black_box(&docs), TfIdfConfig::default())));
    c.bench_function("tfidf/transform_paragraph", |bench| {
        bench.iter(|| model.transform_text(black_box(&corpus.test[0].text)))
    });

    let vectors: Vec<_> = docs.iter().map(|d| model.transform(d)).collect();
    let labels: Vec<i8> = (0..vectors.len()).map(|i| if i % 7 == 0 { 1 } else { -1 }).collect();
    let config = SvmConfig { epochs: 5, ..Default::default() };
    c.bench_function("svm/train_5_epochs", |bench| {
        bench.iter(|| train_svm(black_box(&vectors), &labels, model.dimension(), config))
    });
}

fn matching(c: &mut Criterion) {
    let corpus = clinfix_bench::corpus();
    let index = TrainingPairIndex::build(&corpus.train);
    let query = &corpus.test[0].text;
    c.bench_function("match/filtered", |bench| bench.iter(|| index.best_training_match(black_box(query), 0.85)));
    c.bench_function("match/full_scan", |bench| bench.iter(|| index.best_match_full_scan(black_box(query), 0.85)));
}

fn end_to_end(c: &mut Criterion) {
    let corpus = clinfix_bench::corpus();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("train", |bench| bench.iter(|| train_pipeline(&corpus.train, &PipelineConfig::default())));
    let (pipeline, _) = train_pipeline(&corpus.train, &PipelineConfig::default()).unwrap();
    group.bench_function("predict_test_set", |bench| {
        bench.iter(|| predict_records(&pipeline, &FallbackBackend, &corpus.test, RunMode::QaWithResolver))
    });
    group.finish();
}

criterion_group!(benches, edit_distance, features, matching, end_to_end);
criterion_main!(benches);
