use std::hint::black_box;

use counterarg_core::argtype_detector::{mask_text, TopicKeywordSet};
use counterarg_core::corpus::Topic;
use counterarg_core::evaluation::{corpus_bleu, mean_rouge_l};
use counterarg_core::features::{ControlCode, FeatureSet};
use counterarg_core::generator::feature_delta;
use counterarg_core::value_detector::{quadruple_loss, QuadrupleLossConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn corpus(n: usize) -> (Vec<String>, Vec<String>) {
    let words = ["we", "should", "respect", "every", "person", "the", "data", "shows", "that", "claim", "is", "false"];
    let sent = |i: usize, k: usize| (0..12).map(|j| words[(i * 7 + j * k) % words.len()]).collect::<Vec<_>>().join(" ");
    ((0..n).map(|i| sent(i, 1)).collect(), (0..n).map(|i| sent(i, 5)).collect())
}

fn metrics(c: &mut Criterion) {
    let (hyps, refs) = corpus(500);
    c.bench_function("corpus_bleu_500", |b| b.iter(|| corpus_bleu(black_box(&hyps), black_box(&refs)).unwrap()));
    c.bench_function("mean_rouge_l_500", |b| b.iter(|| mean_rouge_l(black_box(&hyps), black_box(&refs)).unwrap()));

    let mut k = TopicKeywordSet::default();
    k.topics.insert(Topic::Migrants, ["migrant", "migrants", "refugee", "border"].map(String::from).into());
    let text = "the migrant crossed the border while refugees and migrants waited, a border story ".repeat(20);
    c.bench_function("mask_text", |b| b.iter(|| mask_text(black_box(&text), &k, Topic::Migrants)));

    let q: FeatureSet = ControlCode::ALL.iter().step_by(2).copied().collect();
    let r: FeatureSet = ControlCode::ALL.iter().step_by(3).copied().collect();
    c.bench_function("feature_delta", |b| b.iter(|| feature_delta(black_box(&q), black_box(&r))));

    let v: Vec<Vec<f64>> = (0..4).map(|i| (0..256).map(|j| ((i * 31 + j) as f64).sin()).collect()).collect();
    let cfg = QuadrupleLossConfig::default();
    c.bench_function("quadruple_loss_256", |b| b.iter(|| quadruple_loss(&v[0], &v[1], &v[2], &v[3], &cfg).unwrap()));
}

criterion_group!(benches, metrics);
criterion_main!(benches);
