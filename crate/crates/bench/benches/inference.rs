use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ndl::detect::{scan, DetectConfig};
use ndl::metrics::roc_auc;
use ndl::model::{aggregate, compute_alpha, predict_proba};
use ndl_bench::{default_params, noise, noise_recording, scored_labels};

fn bench_predict(c: &mut Criterion) {
    let params = default_params(0);
    let mut group = c.benchmark_group("predict_proba");
    for d in [3, 22, 140] {
        let x = noise(d, 64, 1);
        let z = noise(d, 64, 2);
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| predict_proba(black_box(x.view()), black_box(z.view()), &params).unwrap())
        });
    }
    group.finish();
}

fn bench_aggregate(c: &mut Criterion) {
    let x = noise(22, 64, 3);
    let z = noise(22, 64, 4);
    let alpha = compute_alpha(noise(22, 64, 5).view());
    c.bench_function("aggregate d=22", |b| {
        b.iter(|| aggregate(black_box(x.view()), black_box(z.view()), &alpha).unwrap())
    });
}

fn bench_scan(c: &mut Criterion) {
    let params = default_params(6);
    let recording = noise_recording(22, 5_000, 7);
    let config = DetectConfig { stride: 16, ..DetectConfig::default() };
    let mut group = c.benchmark_group("scan");
    group.sample_size(10);
    group.bench_function("22x5000 stride 16", |b| b.iter(|| scan(&recording, &params, &config).unwrap()));
    group.finish();
}

fn bench_auc(c: &mut Criterion) {
    let mut group = c.benchmark_group("roc_auc");
    for n in [1_000, 100_000] {
        let (scores, labels) = scored_labels(n, 8);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| roc_auc(black_box(&scores), black_box(&labels)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_predict, bench_aggregate, bench_scan, bench_auc);
criterion_main!(benches);
