//! Benchmark bodies shared by the `kernels` bench target.
//!
//! Fixtures are built from the synthetic keyword corpus so every run sees
//! the same inputs.

use std::hint::black_box;

use absa_core::agreement::{cohen_kappa, pairwise_agreement, AnnotationRun};
use absa_core::classicml::{train_classic, ClassicConfig, ClassicKind, ClassicModel};
use absa_core::corpus::synthetic::keyword_corpus;
use absa_core::corpus::{split_dataset, SplitRatios};
use absa_core::evaluation::{evaluate, Task};
use absa_core::listening::summarize_product;
use absa_core::models::Predictor;
use absa_core::neuralcore::{bilstm_backward, bilstm_forward, LstmCellParams, Tensor};
use absa_core::{Dataset, LabelSet};
use criterion::{BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus(n: usize) -> Dataset {
    keyword_corpus(n, 17)
}

pub fn naive_bayes(train: &Dataset) -> ClassicModel {
    train_classic(&ClassicConfig::new(ClassicKind::NaiveBayes, 1), train).expect("labelled corpus")
}

/// Copies of `gold` where each aspect is independently re-drawn with probability `noise`.
pub fn noisy_runs(gold: &[LabelSet], annotators: usize, noise: f64, seed: u64) -> Vec<AnnotationRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..annotators)
        .map(|a| {
            let items: std::collections::BTreeMap<u64, LabelSet> = gold
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let mut l = *g;
                    for aspect in absa_core::Aspect::CONTENT {
                        if rng.gen_bool(noise) {
                            match rng.gen_range(0..4) {
                                0 => l.clear(aspect),
                                k => l.set(aspect, absa_core::Polarity::ALL[k - 1]).expect("content aspect"),
                            }
                        }
                    }
                    (i as u64, l)
                })
                .collect();
            AnnotationRun::new(format!("ann{a}"), 1, items)
        })
        .collect()
}

pub fn scoring(c: &mut Criterion) {
    let ds = corpus(3000);
    let split = split_dataset(&ds, SplitRatios::default(), 1).expect("large enough");
    let model = naive_bayes(&split.train);
    let gold = split.test.gold_labels().expect("labelled");
    let pred: Vec<LabelSet> = split
        .test
        .comments()
        .iter()
        .map(|c| model.predict_labels(&c.text))
        .collect();
    let mut group = c.benchmark_group("evaluation");
    group.throughput(Throughput::Elements(gold.len() as u64));
    group.bench_function("evaluate", |b| {
        b.iter(|| evaluate("nb", black_box(&gold), black_box(&pred)).unwrap())
    });
    group.finish();
}

pub fn agreement(c: &mut Criterion) {
    let mut group = c.benchmark_group("agreement");
    for n in [1_000usize, 10_000] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let a: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("cohen_kappa", n), &n, |bench, _| {
            bench.iter(|| cohen_kappa(black_box(&a), black_box(&b)).unwrap())
        });
    }
    let gold = corpus(1000).gold_labels().expect("labelled");
    let runs = noisy_runs(&gold, 5, 0.05, 3);
    group.bench_function("pairwise_5x1000_sentiment", |b| {
        b.iter(|| pairwise_agreement(black_box(&runs), Task::Sentiment).unwrap())
    });
    group.finish();
}

pub fn listening(c: &mut Criterion) {
    let ds = corpus(3000);
    let model = naive_bayes(&ds);
    let comments = ds.comments();
    let mut group = c.benchmark_group("listening");
    group.sample_size(20);
    group.bench_function("summarize_product_1000", |b| {
        b.iter(|| summarize_product("phone-a", black_box(comments), &model).unwrap())
    });
    group.finish();
}

pub fn training(c: &mut Criterion) {
    let ds = corpus(1000);
    let mut group = c.benchmark_group("classicml");
    group.sample_size(10);
    for kind in [ClassicKind::NaiveBayes, ClassicKind::LinearSvm] {
        group.bench_function(BenchmarkId::new("train_1000", kind.name()), |b| {
            b.iter(|| train_classic(&ClassicConfig::new(kind, 1), black_box(&ds)).unwrap())
        });
    }
    group.finish();
}

pub fn recurrent(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (t_len, d_in, d_h) = (60, 150, 128);
    let fwd = LstmCellParams::<f32>::init(d_in, d_h, &mut rng);
    let bwd = LstmCellParams::<f32>::init(d_in, d_h, &mut rng);
    let x = Tensor::<f32>::uniform(&[t_len, d_in], 1.0, &mut rng);
    let dout = Tensor::<f32>::uniform(&[t_len, 2 * d_h], 1.0, &mut rng);
    let mut group = c.benchmark_group("neuralcore");
    group.sample_size(20);
    group.bench_function("bilstm_forward_t60", |b| {
        b.iter(|| bilstm_forward(black_box(&x), &fwd, &bwd).unwrap())
    });
    let (_, cache) = bilstm_forward(&x, &fwd, &bwd).unwrap();
    group.bench_function("bilstm_backward_t60", |b| {
        b.iter(|| {
            let mut gf = fwd.zeros_like();
            let mut gb = bwd.zeros_like();
            bilstm_backward(&cache, black_box(&dout), &fwd, &bwd, &mut gf, &mut gb)
        })
    });
    group.finish();
}
