use criterion::{criterion_group, criterion_main, Criterion};
use latentmv_bench::{covariance, window};
use latentmv_core::autoenc::{train, AutoencoderSpec, Depth};
use latentmv_core::cov::{dcc_fit, garch11_fit};
use latentmv_core::dimred::{pca_fit, simpls_fit, spca_fit, spls_fit, SparsityParams};
use latentmv_core::opt::{long_only_matrix, turnover_matrix};
use nalgebra::DVector;
use std::hint::black_box;

fn extractors(c: &mut Criterion) {
    let (r, x) = window(100, 240, 1).unwrap();
    c.bench_function("pca k=5, 240x100", |b| b.iter(|| pca_fit(black_box(&x), 5).unwrap()));
    c.bench_function("simpls k=5, 240x100", |b| b.iter(|| simpls_fit(black_box(&x), &r, 5).unwrap()));
    c.bench_function("spca k=5, 240x100", |b| {
        b.iter(|| spca_fit(black_box(&x), 5, SparsityParams::spca(1e-2, 1e-4)).unwrap())
    });
    c.bench_function("spls k=5, 240x100", |b| b.iter(|| spls_fit(black_box(&x), &r, 5, 0.5).unwrap()));

    let (train_x, val_x) = (x.rows(0, 192).into_owned(), x.rows(192, 48).into_owned());
    let mut spec = AutoencoderSpec::new(100, 5, Depth::Aen2);
    spec.max_epochs = 5;
    spec.patience = 5;
    c.bench_function("autoencoder 5 epochs, 192x100", |b| {
        b.iter(|| train(black_box(&spec), &train_x, &val_x).unwrap())
    });
}

fn volatility(c: &mut Criterion) {
    let (r, _) = window(5, 240, 2).unwrap();
    let series = r.column(0).iter().copied().collect::<Vec<_>>();
    c.bench_function("garch(1,1), T=240", |b| b.iter(|| garch11_fit(black_box(&series)).unwrap()));
    c.bench_function("dcc 5 series, T=240", |b| b.iter(|| dcc_fit(black_box(&r)).unwrap()));
}

fn optimizers(c: &mut Criterion) {
    let (r, _) = window(100, 240, 3).unwrap();
    let sigma = covariance(&r);
    let prior = DVector::from_element(100, 0.01);
    c.bench_function("long-only minvar, N=100", |b| b.iter(|| long_only_matrix(black_box(&sigma)).unwrap()));
    c.bench_function("turnover-penalised minvar, N=100", |b| {
        b.iter(|| turnover_matrix(black_box(&sigma), &prior, 0.002).unwrap())
    });
}

criterion_group!(benches, extractors, volatility, optimizers);
criterion_main!(benches);
