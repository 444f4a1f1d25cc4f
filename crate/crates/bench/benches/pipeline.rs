use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use morin_bench::load;
use morin_core::analysis::{find_restricted_zeros, find_xi_zeros, Analysis};
use morin_core::expr::{gradient, parse_expr};
use morin_core::model::global_equations;
use morin_core::solver::grid_oracle;

fn symbolic(c: &mut Criterion) {
    let vars: Vec<String> = ["x1", "x2", "x3"].iter().map(|s| s.to_string()).collect();
    let text = "(sqrt(x2^2 + x3^2) - 2)^2 + (x1 + x2)^2 - 1";
    c.bench_function("parse_and_gradient_torus", |b| {
        b.iter(|| {
            let e = parse_expr(black_box(text), &vars).unwrap();
            gradient(&e, 3)
        })
    });
    let scene = load("torus_v");
    c.bench_function("global_equations_sigma2_torus", |b| {
        b.iter(|| global_equations(black_box(&scene), 2).unwrap())
    });
}

fn strata(c: &mut Criterion) {
    let mut g = c.benchmark_group("strata");
    g.sample_size(10);
    for name in ["ex7", "torus_v", "sphere_w"] {
        let scene = load(name);
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut an = Analysis::new(&scene).unwrap();
                an.compute_strata(2).unwrap()
            })
        });
    }
    g.finish();
}

fn zeros(c: &mut Criterion) {
    let scene = load("torus_v");
    let mut an = Analysis::new(&scene).unwrap();
    an.compute_strata(2).unwrap();
    let a = [0.6, 0.8];
    let mut g = c.benchmark_group("zeros_torus");
    g.sample_size(10);
    g.bench_function("xi", |b| {
        b.iter(|| find_xi_zeros(&an, black_box(&a)).unwrap())
    });
    g.bench_function("xi_on_sigma1", |b| {
        b.iter(|| find_restricted_zeros(&an, 1, black_box(&a)).unwrap())
    });
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let scene = load("torus_v");
    let an = Analysis::new(&scene).unwrap();
    let sys = an.atlas().global_system(2).unwrap();
    let mut g = c.benchmark_group("oracle_torus_sigma2");
    g.sample_size(10);
    for grid in [32, 64] {
        let mut opts = an.options().clone();
        opts.grid = grid;
        g.bench_function(format!("grid{grid}"), |b| {
            b.iter(|| grid_oracle(&sys, &opts))
        });
    }
    g.finish();
}

criterion_group!(benches, symbolic, strata, zeros, oracle);
criterion_main!(benches);
