use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qcgen_core::generator::{generate_with_targets, top_k_distribution, GenerateOptions};
use qcgen_core::nn::train::loss_and_grad;
use qcgen_core::nn::{attention, ModelConfig, Sample, Tensor2, TransformerModel};
use qcgen_core::qasm::{parse_strict, serialize};
use qcgen_core::structure::extract_metrics;
use qcgen_core::synth;
use qcgen_core::vocab::StatementVocab;

fn parsing(c: &mut Criterion) {
    let texts: Vec<String> = synth::structured_corpus(56).iter().map(|n| serialize(&n.circuit)).collect();
    c.bench_function("parse_strict 56 files", |b| {
        b.iter(|| {
            for t in &texts {
                black_box(parse_strict(t).unwrap());
            }
        })
    });
}

fn attention_bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let q = Tensor2::random_normal(128, 16, 1.0, &mut rng);
    let k = Tensor2::random_normal(128, 16, 1.0, &mut rng);
    let v = Tensor2::random_normal(128, 16, 1.0, &mut rng);
    c.bench_function("causal attention 128x16", |b| b.iter(|| black_box(attention(&q, &k, &v, true).unwrap())));
}

fn training_step(c: &mut Criterion) {
    let model = TransformerModel::new(ModelConfig::desk_generator(300), 0).unwrap();
    let seqs: Vec<Vec<u32>> = (0..4).map(|i| (0..64).map(|t| ((t * 7 + i) % 297 + 3) as u32).collect()).collect();
    let batch: Vec<Sample<'_>> = seqs.iter().map(|s| Sample::NextToken(s)).collect();
    c.bench_function("desk generator loss+grad, 4x64", |b| {
        b.iter(|| black_box(loss_and_grad(&model, &batch, None).unwrap()))
    });
}

fn decoding(c: &mut Criterion) {
    let corpus = synth::structured_corpus(56);
    let texts: Vec<String> = corpus
        .iter()
        .flat_map(|n| n.circuit.body().map(|s| s.to_string()).collect::<Vec<_>>())
        .collect();
    let mut seen = std::collections::HashSet::new();
    let unique: Vec<&String> = texts.iter().filter(|t| seen.insert(t.as_str())).collect();
    let vocab = StatementVocab::from_texts(unique).unwrap();
    let model = TransformerModel::new(ModelConfig::desk_generator(vocab.size()), 1).unwrap();
    let opts = GenerateOptions::default();
    c.bench_function("generate 30 gates on 5 qubits", |b| {
        b.iter(|| black_box(generate_with_targets(&model, &vocab, 5, 30, 7, &opts).unwrap()))
    });
    let logits: Vec<f64> = (0..vocab.size()).map(|i| (i as f64 * 0.37).sin()).collect();
    let mask = vec![true; vocab.size()];
    c.bench_function("top-k distribution", |b| {
        b.iter(|| black_box(top_k_distribution(&logits, &mask, &[], 5)))
    });
}

fn metrics(c: &mut Criterion) {
    let corpus = synth::structured_corpus(56);
    c.bench_function("extract_metrics 56 circuits", |b| {
        b.iter(|| {
            for n in &corpus {
                black_box(extract_metrics(&n.circuit));
            }
        })
    });
}

criterion_group!(benches, parsing, attention_bench, training_step, decoding, metrics);
criterion_main!(benches);
