use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use critex::certificate::{dissipation_functionals, Cutoffs};
use critex::evolve::step;
use critex::picard::{ladder_times, PicardOperator};
use critex::quad::gauss_jacobi;
use critex::special::beta_function;
use critex::{make_bump, BumpKind, ForcingSpec, Grid, Params, Propagator};

fn propagator(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagator_apply");
    for n in [64usize, 128, 256] {
        let g = Grid::new(2, 32.0, n).unwrap();
        let prop = Propagator::new(g);
        let f = make_bump(&g, BumpKind::Gaussian, &[0.0, 0.0], 2.0, 1.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| prop.apply(black_box(f), 0.5).unwrap())
        });
    }
    group.finish();
}

fn split_step(c: &mut Criterion) {
    let g = Grid::new(2, 32.0, 64).unwrap();
    let prop = Propagator::new(g);
    let u = make_bump(&g, BumpKind::Gaussian, &[0.0, 0.0], 2.0, 0.1).unwrap();
    let w = ForcingSpec::new(u.clone());
    let params = Params::new(2, 3.0, -0.5).unwrap();
    c.bench_function("evolve_step_64x64", |b| {
        b.iter(|| step(&prop, black_box(&u), 1.0, 1e-2, &params, &w).unwrap())
    });
}

fn quadrature(c: &mut Criterion) {
    c.bench_function("gauss_jacobi_32", |b| {
        b.iter(|| gauss_jacobi(black_box(32), -0.5, 0.0).unwrap())
    });
    c.bench_function("beta_function", |b| {
        b.iter(|| beta_function(black_box(0.25), black_box(0.5)).unwrap())
    });
}

fn picard_map(c: &mut Criterion) {
    let g = Grid::new(2, 16.0, 32).unwrap();
    let data = make_bump(&g, BumpKind::Gaussian, &[0.0, 0.0], 1.0, 0.01).unwrap();
    let w = ForcingSpec::new(data.clone());
    let params = Params::new(2, 4.0, -0.5).unwrap();
    let op = PicardOperator::new(&data, &w, &params, 6.0, ladder_times(10.0, 16).unwrap()).unwrap();
    let u = op.linear_part(0.1).unwrap();
    c.bench_function("picard_apply_16_rungs", |b| {
        b.iter(|| op.apply(black_box(&u)).unwrap())
    });
}

fn certificate(c: &mut Criterion) {
    let g = Grid::new(2, 32.0, 128).unwrap();
    let params = Params::new(2, 2.0, -0.5).unwrap();
    let cutoffs = Cutoffs::standard();
    c.bench_function("dissipation_functionals", |b| {
        b.iter(|| dissipation_functionals(black_box(128.0), &params, &cutoffs, &g).unwrap())
    });
}

criterion_group!(
    benches,
    propagator,
    split_step,
    quadrature,
    picard_map,
    certificate
);
criterion_main!(benches);
