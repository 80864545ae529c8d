use criterion::{criterion_group, criterion_main, Criterion};
use nudgelab_bench::{noise, regression_data};
use nudgelab_core::archetype::complete_linkage;
use nudgelab_core::pipeline::trial_replication;
use nudgelab_core::sim::SimConfig;
use nudgelab_core::stats::{fit_ols, km_curve, Covariance, Design};
use nudgelab_core::text::{count_keywords, ArmClass, KeywordDictionary};
use nudgelab_core::trees::{fit_boost, fit_forest, BoostParams, ForestParams, Matrix};
use std::hint::black_box;

fn ols(c: &mut Criterion) {
    let (rows, y) = regression_data(233, 7);
    let mut cols = vec![vec![1.0; rows.len()]];
    cols.extend((0..7).map(|j| rows.iter().map(|r| r[j]).collect()));
    let names = (0..8).map(|j| format!("x{j}")).collect();
    let design = Design::from_columns(names, &cols).unwrap();
    let keys: Vec<String> = (0..rows.len()).map(|i| (i / 2).to_string()).collect();
    c.bench_function("ols_cluster_robust_233x8", |b| {
        b.iter(|| fit_ols(black_box(&design), black_box(&y), &Covariance::ClusterRobust(keys.clone())).unwrap())
    });
}

fn survival(c: &mut Criterion) {
    let d: Vec<(u32, bool)> = (0..233).map(|i| (1 + (i % 5) as u32, noise(i, 0) < 0.6)).collect();
    c.bench_function("kaplan_meier_233", |b| b.iter(|| km_curve(black_box(&d))));
}

fn trees(c: &mut Criterion) {
    let (rows, y) = regression_data(300, 13);
    let x = Matrix::from_rows(&rows).unwrap();
    c.bench_function("boost_300x13_300_trees", |b| b.iter(|| fit_boost(&x, &y, &BoostParams::default()).unwrap()));
    let params = ForestParams::with_trees(100);
    c.bench_function("forest_300x13_100_trees", |b| b.iter(|| fit_forest(&x, &y, &params, 7).unwrap()));
}

fn linkage(c: &mut Criterion) {
    let v: Vec<Vec<f64>> = (0..120).map(|i| (0..3).map(|j| noise(i, j) - 0.5).collect()).collect();
    c.bench_function("complete_linkage_120", |b| b.iter(|| complete_linkage(black_box(&v)).unwrap()));
}

fn keywords(c: &mut Criterion) {
    let dict = KeywordDictionary::default_dictionaries();
    let text = "Your air conditioner used most of your electricity this week. Try switching off the desk lamp \
                and unplugging the phone charger; a shorter shower saves hot water and money for your community.";
    c.bench_function("keyword_match_message", |b| {
        b.iter(|| count_keywords("m", black_box(text), 1, ArmClass::Personalized, &dict))
    });
}

fn replication(c: &mut Criterion) {
    let cfg = SimConfig::default();
    let mut g = c.benchmark_group("trial");
    g.sample_size(10);
    g.bench_function("replication_n233", |b| b.iter(|| trial_replication(&cfg, 1).unwrap()));
    g.finish();
}

criterion_group!(benches, ols, survival, trees, linkage, keywords, replication);
criterion_main!(benches);
