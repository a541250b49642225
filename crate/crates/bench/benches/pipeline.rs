use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mgtd::augment::{augment_corpus, paraphrase_document, segment, NoiseParaphraser};
use mgtd::metrics::compute_metrics_codes;
use mgtd::model::Mode;
use mgtd::trainer::{evaluate, Trainer};
use mgtd::{synthetic, Model, TrainConfig};

fn augmentation(c: &mut Criterion) {
    let docs = synthetic::generate(64, 0);
    let p = NoiseParaphraser::new(0);
    c.bench_function("segment/64 docs", |b| {
        b.iter(|| docs.iter().map(|d| segment(black_box(&d.text)).sentences.len()).sum::<usize>())
    });
    c.bench_function("noise paraphrase/64 docs", |b| {
        b.iter(|| {
            for d in &docs {
                black_box(paraphrase_document(d, &p).unwrap());
            }
        })
    });
}

fn model(c: &mut Criterion) {
    let cfg = TrainConfig::default();
    let model = Model::new(cfg.model_config(), 0).unwrap();
    let docs = synthetic::generate(2, 0);
    let inst = augment_corpus(&docs, &NoiseParaphraser::new(0)).unwrap();
    let obj = cfg.objective();
    c.bench_function("forward pair/d=64", |b| b.iter(|| model.forward_pair(black_box(&inst[0]), Mode::Eval).unwrap()));
    let mut grads = model.params.zeros_like();
    c.bench_function("forward+backward pair/d=64", |b| {
        b.iter(|| {
            let trace = model.forward_pair_traced(&inst[1], Mode::Eval).unwrap();
            let (_, g) = obj.loss_with_grad(&trace.output(), &inst[1]).unwrap();
            model.backward_text(&trace.anchor, &g.emb_anchor, g.prob_anchor, &mut grads);
            model.backward_text(&trace.para, &g.emb_para, g.prob_para, &mut grads);
        })
    });
}

fn training(c: &mut Criterion) {
    let docs = synthetic::generate(320, 1);
    let (train, val) = synthetic::split_holdout(&docs, 0.5, 1);
    let inst = augment_corpus(&train, &NoiseParaphraser::new(1)).unwrap();
    let cfg = TrainConfig::default();
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("epoch/160 instances", |b| {
        b.iter_batched(
            || Trainer::new(&cfg).unwrap(),
            |mut t| t.train_epoch(&inst, 1).unwrap(),
            BatchSize::LargeInput,
        )
    });
    let model = Model::new(cfg.model_config(), 0).unwrap();
    group.bench_function("evaluate/160 docs", |b| b.iter(|| evaluate(&model, &val, 0.5).unwrap()));
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let gold: Vec<u8> = (0..10_000).map(|i| (i % 3 == 0) as u8).collect();
    let pred: Vec<u8> = (0..10_000).map(|i| (i % 5 == 0) as u8).collect();
    c.bench_function("metrics/10k", |b| b.iter(|| compute_metrics_codes(black_box(&gold), black_box(&pred)).unwrap()));
}

criterion_group!(benches, augmentation, model, training, metrics);
criterion_main!(benches);
