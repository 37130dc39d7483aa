use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use posfeed::metzler::dominant_eigenpair;
use posfeed::sim::{integrate, IntegratorConfig};
use posfeed::verify::check_h2;
use posfeed::{parse_expression, SampleDomain, Scenario, SquareMatrix, SystemModel};

fn metzler(n: usize) -> SquareMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { -(n as f64) } else { ((i * 7 + j * 3) % 5) as f64 * 0.2 }).collect())
        .collect();
    SquareMatrix::from_rows(&rows).unwrap()
}

fn eigenpair(c: &mut Criterion) {
    for n in [3, 10, 30] {
        let a = metzler(n);
        c.bench_function(&format!("dominant_eigenpair_{n}"), |b| b.iter(|| dominant_eigenpair(black_box(&a)).unwrap()));
    }
}

fn verify(c: &mut Criterion) {
    let s3 = SystemModel::builtin("S3").unwrap();
    let d = SampleDomain::uniform_box(3, 0.0, 10.0, 5, 200, 42);
    let mut g = c.benchmark_group("check_h2");
    g.sample_size(10);
    g.bench_function("S3", |b| b.iter(|| check_h2(&s3, &d, &[2.0]).unwrap()));
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let s3 = SystemModel::builtin("S3").unwrap();
    let cfg = IntegratorConfig::for_model(&s3);
    let mut g = c.benchmark_group("integrate");
    g.sample_size(20);
    g.bench_function("S3_switched_200", |b| {
        b.iter(|| integrate(&s3, Scenario::Switched { u: 1.0, gamma: 1.73, t_switch: 20.0 }, &[1.0; 3], 0.0, 200.0, &cfg).unwrap())
    });
    let s2 = SystemModel::builtin("S2").unwrap();
    let cfg = IntegratorConfig::for_model(&s2);
    g.bench_function("S2_open_100", |b| {
        b.iter(|| integrate(&s2, Scenario::OpenLoop { u: 1.0 }, &[0.5; 3], 0.0, 100.0, &cfg).unwrap())
    });
    g.finish();
}

fn expressions(c: &mut Criterion) {
    let text = "k1*x1/(k2 + x1) - mu*x1*x2 + exp(-x3)^2 / (1 + x3^80)";
    c.bench_function("parse_expression", |b| b.iter(|| parse_expression(black_box(text)).unwrap()));
    let e = parse_expression(text).unwrap();
    let params: BTreeMap<String, f64> = [("k1", 1.5), ("k2", 0.3), ("mu", 0.7)].map(|(k, v)| (k.to_string(), v)).into();
    let x = [0.4, 1.2, 0.9];
    c.bench_function("eval_expression", |b| b.iter(|| e.eval(black_box(&x), &params).unwrap()));
    let d = e.differentiate(0);
    c.bench_function("eval_derivative", |b| b.iter(|| d.eval(black_box(&x), &params).unwrap()));
}

criterion_group!(benches, eigenpair, verify, simulate, expressions);
criterion_main!(benches);
