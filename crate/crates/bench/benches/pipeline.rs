use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sisvae::nets::{unroll_values, UnrollMode};
use sisvae::scoring::{score_series, score_smc};
use sisvae::training::{chunk_loss_and_grad, make_windows, train, TrainConfig};
use sisvae::{Criterion as ScoreCriterion, Regularizer, SeriesMatrix};
use sisvae_bench::{model, normal};

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("chunk");
    for &(h, z) in &[(32, 8), (200, 40)] {
        let params = model(20, h, z);
        let x = normal(20, 40, 1);
        let noise = normal(40, z, 2);
        group.bench_with_input(BenchmarkId::new("unroll", h), &h, |b, _| {
            b.iter(|| unroll_values(&params, x.view(), noise.view(), UnrollMode::Score).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("loss_and_grad", h), &h, |b, _| {
            b.iter(|| {
                chunk_loss_and_grad(&params, x.view(), noise.view(), 0.5, Regularizer::Kl).unwrap()
            })
        });
    }
    group.finish();
}

fn training_epoch(c: &mut Criterion) {
    let data = SeriesMatrix::new(normal(20, 400, 3)).unwrap();
    let chunks = make_windows(&data, 40, 40).unwrap();
    let params = model(20, 32, 8);
    let config = TrainConfig {
        window_w: 40,
        step_s: 40,
        epochs: 1,
        ..TrainConfig::default()
    };
    c.bench_function("train/epoch_20x400_h32", |b| {
        b.iter(|| train(&chunks, &config, *params.config()).unwrap())
    });
}

fn scoring(c: &mut Criterion) {
    let params = model(20, 32, 8);
    let x = normal(20, 400, 4);
    let mut group = c.benchmark_group("score");
    for l in [4usize, 32] {
        group.bench_with_input(BenchmarkId::new("smc_chunk", l), &l, |b, &l| {
            b.iter(|| score_smc(&params, x.slice(ndarray::s![.., 0..40]), l, 0).unwrap())
        });
    }
    group.bench_function("series_prob_L32", |b| {
        b.iter(|| score_series(&params, x.view(), 40, ScoreCriterion::Prob, 32, 0).unwrap())
    });
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = forward_backward, training_epoch, scoring
}
criterion_main!(benches);
