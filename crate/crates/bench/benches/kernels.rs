use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fracheat::control::{apply_k, minimize};
use fracheat::evolution::{solve_heat, HeatProblem};
use fracheat::extension::solve_extension;
use fracheat::rng::{seeded, uniform_matrix};
use fracheat::{assemble, Grid, HalfStripGrid, SpaceTimeField, TimeGrid};
use fracheat_bench::{desk, heat_context};

fn bench_assemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble");
    for n in [129, 257, 513] {
        let grid = Grid::new(1, 4.0, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, g| {
            b.iter(|| assemble(black_box(g), 0.5).unwrap())
        });
    }
    group.finish();
}

fn bench_heat(c: &mut Criterion) {
    let (op, part) = desk(129, 0.5);
    let time = TimeGrid::new(32).unwrap();
    let raw = uniform_matrix(&mut seeded(1), part.interior().len(), time.levels());
    let src = SpaceTimeField::scatter(op.grid(), time, part.interior(), &raw).unwrap();
    c.bench_function("solve_heat n=129 m=32", |b| {
        b.iter(|| solve_heat(&HeatProblem::new(&op, &part, time).with_source(black_box(&src))).unwrap())
    });
}

fn bench_apply_k(c: &mut Criterion) {
    let (op, part) = desk(129, 0.5);
    let ctx = heat_context(&op, &part, 32, 0.25);
    let v = uniform_matrix(&mut seeded(2), part.interior().len(), ctx.time().levels());
    c.bench_function("apply_k n=129 m=32", |b| b.iter(|| apply_k(black_box(&v), &ctx).unwrap()));
}

fn bench_extension(c: &mut Criterion) {
    let grid = Grid::new(1, 4.0, 257).unwrap();
    let strip = HalfStripGrid::over(&grid).unwrap();
    let u = grid.sample(|p| (-p[0] * p[0]).exp());
    c.bench_function("solve_extension n=257", |b| {
        b.iter(|| solve_extension(black_box(&u), 0.5, &strip).unwrap())
    });
}

fn bench_minimize(c: &mut Criterion) {
    let (op, part) = desk(129, 0.5);
    let ctx = heat_context(&op, &part, 32, 0.25);
    let mut group = c.benchmark_group("minimize");
    group.sample_size(10);
    group.bench_function("heat eps=h/4", |b| b.iter(|| minimize(black_box(&ctx)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_assemble, bench_heat, bench_apply_k, bench_extension, bench_minimize);
criterion_main!(benches);
