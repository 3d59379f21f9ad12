use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ewcell_core::grid::discretize;
use ewcell_core::model::SweepOrder;
use ewcell_core::presets::{self, COPPER};
use ewcell_core::solver::{InitialGuess, Solver};
use ewcell_core::trace::{trace_all_with, TraceParams};
use ewcell_core::{solve_cell, RunOptions};

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    for dims in [[25, 13, 13], [49, 33, 33], [97, 49, 49]] {
        let cfg = presets::partial_bipolar(dims, 8.0, COPPER);
        let grid = discretize(&cfg).unwrap();
        let label = format!("{}x{}x{}", dims[0], dims[1], dims[2]);
        let variants = [
            ("lexicographic", SweepOrder::Lexicographic, false),
            ("red_black_sequential", SweepOrder::RedBlack, false),
            ("red_black_parallel", SweepOrder::RedBlack, true),
        ];
        for (name, order, parallel) in variants {
            let mut params = cfg.solver;
            params.order = order;
            let solver = Solver::new(&grid, cfg.kinetics, params).with_parallel(parallel);
            let mut state = solver.initial_state(InitialGuess::Linear).unwrap();
            group.bench_with_input(BenchmarkId::new(name, &label), &(), |b, _| {
                b.iter(|| solver.sweep_once(&mut state).unwrap())
            });
        }
    }
    group.finish();
}

fn streamlines(c: &mut Criterion) {
    let cfg = presets::four_bipolar(10.0, COPPER);
    let bundle = solve_cell(&cfg, RunOptions { parallel: true }, &mut |_| {}).unwrap();
    let ids: Vec<&str> = bundle
        .grid
        .electrodes
        .iter()
        .map(|e| e.id.as_str())
        .collect();
    let params = TraceParams {
        density: 2,
        ..TraceParams::for_grid(&bundle.grid)
    };
    let mut group = c.benchmark_group("trace_all");
    group.sample_size(10);
    for (name, parallel) in [("sequential", false), ("parallel", true)] {
        group.bench_function(name, |b| {
            b.iter(|| {
                trace_all_with(&bundle.grid, &bundle.fields, &ids, &params, parallel).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sweeps, streamlines);
criterion_main!(benches);
