use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sevkit::{preprocess_negative_paths, sev_t, topt, train_cart, CartConfig, ScoringModel, SevTOptions, TOptConfig};
use sevkit_bench::load;

fn tree_sev(c: &mut Criterion) {
    let (train, test) = load("compas");
    let tree = train_cart(&train, &CartConfig { max_depth: 6, ..Default::default() }).unwrap();
    let positives: Vec<&[f64]> = test.rows().filter(|x| tree.predict(x)).collect();
    c.bench_function("preprocess_negative_paths/compas_depth6", |b| {
        b.iter(|| preprocess_negative_paths(black_box(&tree)).paths.len())
    });
    let index = preprocess_negative_paths(&tree);
    let mut group = c.benchmark_group("sev_t_compas_depth6");
    for early_exit in [false, true] {
        let opts = SevTOptions { early_exit };
        group.bench_with_input(BenchmarkId::new("early_exit", early_exit), &opts, |b, &opts| {
            b.iter(|| positives.iter().map(|x| sev_t(&tree, &index, x, opts).unwrap().sev).sum::<usize>())
        });
    }
    group.finish();
}

fn topt_german(c: &mut Criterion) {
    let (train, _) = load("german");
    let mut group = c.benchmark_group("topt_german");
    group.sample_size(10);
    for depth in [2, 3] {
        let cfg = TOptConfig { max_depth: depth, ..Default::default() };
        group.bench_with_input(BenchmarkId::new("depth", depth), &cfg, |b, cfg| {
            b.iter(|| topt(&train, cfg).unwrap().pool.len())
        });
    }
    group.finish();
}

criterion_group!(benches, tree_sev, topt_german);
criterion_main!(benches);
