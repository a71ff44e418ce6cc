use criterion::{criterion_group, criterion_main, Criterion};
use sevkit::credibility::{fit_gmm, GmmConfig};
use sevkit::{build_mean_mode_reference, flexible_search, sskm_cluster, FlexConfig, SskmConfig};
use sevkit_bench::{load, logistic};

fn references(c: &mut Criterion) {
    let (train, _) = load("compas");
    let model = logistic(&train);
    let negatives = train.with_label(0);
    let mut group = c.benchmark_group("references_compas");
    group.sample_size(20);
    group.bench_function("sskm_c4", |b| {
        b.iter(|| sskm_cluster(&negatives, &model, &SskmConfig::default()).unwrap().1.iterations)
    });
    let reference = build_mean_mode_reference(&negatives).unwrap();
    group.bench_function("flexible_search", |b| {
        b.iter(|| flexible_search(&reference, &negatives, &model, &FlexConfig::default()).unwrap())
    });
    group.bench_function("fit_gmm_k4", |b| b.iter(|| fit_gmm(&negatives, &GmmConfig::default()).unwrap().trace.len()));
    group.finish();
}

criterion_group!(benches, references);
criterion_main!(benches);
