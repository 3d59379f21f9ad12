use ewcell_core::field::{self, surface_flux};
use ewcell_core::grid::{discretize, Direction, Grid, NodeClass};
use ewcell_core::model::{Kinetics, SweepOrder};
use ewcell_core::presets::{self, COPPER, GAP};
use ewcell_core::solver::{InitialGuess, SolveError, Solver};
use ewcell_core::{solve_cell, RunOptions};
use nalgebra::{DMatrix, DVector};

/// Series current of anode | electrolyte | cathode with linear kinetics,
/// as the solution of the interface equations.
/// Unknowns: j, anode interface potential, cathode interface potential.
fn two_plate_current(u: f64, gap: f64, sigma: f64, k: &Kinetics) -> f64 {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            k.k_a,
            1.0,
            0.0, //
            -k.k_c,
            0.0,
            1.0, //
            -gap / sigma,
            1.0,
            -1.0,
        ],
    );
    let b = DVector::from_column_slice(&[u + k.e_a, -k.e_c, 0.0]);
    a.lu().solve(&b).expect("regular system")[0]
}

/// Series current and floating potential of anode | gap 1 | plate | gap 2 |
/// cathode. Unknowns: j, V_a, V_b1 (plate face towards the anode), V_m,
/// V_b2 (plate face towards the cathode), V_c.
fn bipolar_series(u: f64, l1: f64, l2: f64, sigma: f64, k: &Kinetics) -> (f64, f64) {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(6, 6, &[
        k.k_a,       1.0,  0.0,  0.0,  0.0,  0.0,
        -l1 / sigma, 1.0, -1.0,  0.0,  0.0,  0.0,
        -k.k_c,      0.0,  1.0, -1.0,  0.0,  0.0,
        k.k_a,       0.0,  0.0, -1.0,  1.0,  0.0,
        -l2 / sigma, 0.0,  0.0,  0.0,  1.0, -1.0,
        -k.k_c,      0.0,  0.0,  0.0,  0.0,  1.0,
    ]);
    let b = DVector::from_column_slice(&[u + k.e_a, 0.0, -k.e_c, k.e_a, 0.0, -k.e_c]);
    let x = a.lu().solve(&b).expect("regular system");
    (x[0], x[3])
}

#[test]
fn oracle_reduces_to_ohm_for_ideal_plates() {
    let j = two_plate_current(1.0, 0.8, 50.0, &Kinetics::IDEAL);
    assert!((j - 62.5).abs() < 1e-12);
    let (j, vm) = bipolar_series(2.0, 0.3, 0.3, 50.0, &Kinetics::IDEAL);
    assert!((j - 2.0 / 0.012).abs() < 1e-9);
    assert!((vm - 1.0).abs() < 1e-12);
}

#[test]
fn ideal_plates_have_uniform_current() {
    let cfg = presets::two_plate(28, 9, 1.0, Kinetics::IDEAL);
    let b = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    assert!(b.report.converged);
    let x0 = b.grid.electrodes[0].snapped.max[0];
    for (i, c) in b.grid.classes.iter().enumerate() {
        if c.is_electrolyte() {
            assert!((b.fields.magnitude[i] - 62.5).abs() < 62.5e-3, "node {i}");
            let x = b.grid.node_position(i)[0];
            assert!((b.fields.potential[i] - (1.0 - (x - x0) / GAP)).abs() < 1e-6);
        }
    }
}

#[test]
fn polarized_plates_match_the_series_solution() {
    for kinetics in [Kinetics::default(), COPPER] {
        let u = 2.0;
        let cfg = presets::two_plate(64, 5, u, kinetics);
        let b = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
        assert!(b.report.converged);
        let j = two_plate_current(u, GAP, 50.0, &kinetics);
        let area = 0.4 * 0.4;
        let net = surface_flux(&b.grid, &b.fields, "anode").unwrap().net;
        assert!((net / area - j).abs() < 5e-3 * j, "{} vs {j}", net / area);
        for (i, c) in b.grid.classes.iter().enumerate() {
            if c.is_electrolyte() {
                assert!((b.fields.current[i][0] - j).abs() < 5e-3 * j);
            }
        }
    }
}

#[test]
fn floating_plate_matches_the_series_solution() {
    let u = 5.0;
    let cfg = presets::bipolar_series(64, 5, u, COPPER);
    let b = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    assert!(b.report.converged);
    let (j, vm) = bipolar_series(u, 0.3, 0.3, 50.0, &COPPER);
    assert!((b.fields.metallic[1] - vm).abs() < 1e-3);
    let flux = surface_flux(&b.grid, &b.fields, "bipolar").unwrap();
    assert!(flux.imbalance() <= cfg.solver.flux_tolerance);
    assert!((flux.gross / 2.0 / 0.16 - j).abs() < 5e-3 * j);
}

#[test]
fn converged_floating_potential_is_a_fixed_point() {
    let cfg = presets::bipolar_series(32, 5, 5.0, COPPER);
    let grid = discretize(&cfg).unwrap();
    let solver = Solver::new(&grid, cfg.kinetics, cfg.solver);
    let mut sol = solver.solve(InitialGuess::Linear).unwrap();
    let before = sol.state.metallic[1];
    let after = solver
        .update_floating_potential(&mut sol.state, "bipolar", 1.0)
        .unwrap();
    assert!((after - before).abs() < cfg.solver.tolerance);
}

fn max_shift(a: &[f64], b: &[f64], shift: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (y - x - shift).abs())
        .fold(0.0, f64::max)
}

#[test]
fn gauge_shift() {
    let cfg = presets::partial_bipolar([25, 13, 13], 6.0, COPPER);
    let a = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    let b = solve_cell(
        &cfg.shifted_potentials(10.0),
        RunOptions::default(),
        &mut |_| {},
    )
    .unwrap();
    assert!(max_shift(&a.fields.potential, &b.fields.potential, 10.0) < 1e-9);
    assert!(max_shift(&a.fields.metallic, &b.fields.metallic, 10.0) < 1e-9);
    let scale = a.fields.magnitude.iter().copied().fold(0.0, f64::max);
    for (ja, jb) in a.fields.current.iter().zip(&b.fields.current) {
        for k in 0..3 {
            assert!((ja[k] - jb[k]).abs() <= 1e-9 * scale);
        }
    }
}

fn net_over_gross(grid: &Grid, fields: &field::FieldSet) -> f64 {
    let mut net = 0.0;
    let mut gross = 0.0;
    for e in &grid.electrodes {
        let f = surface_flux(grid, fields, &e.id).unwrap();
        net += f.net;
        gross += f.gross;
    }
    net.abs() / gross
}

#[test]
fn current_is_conserved() {
    let cfg = presets::partial_bipolar([25, 13, 13], 8.0, COPPER);
    let b = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    assert!(net_over_gross(&b.grid, &b.fields) < 10.0 * cfg.solver.flux_tolerance);
}

#[test]
fn converged_state_invariants() {
    let cfg = presets::partial_bipolar([25, 13, 13], 8.0, COPPER);
    let grid = discretize(&cfg).unwrap();
    let solver = Solver::new(&grid, cfg.kinetics, cfg.solver);
    let sol = solver.solve(InitialGuess::Linear).unwrap();
    let v = &sol.state.potential;
    let tol = cfg.solver.tolerance;
    let h = grid.spacing[0];

    assert_eq!(field::electrode_spread(&grid, v), 0.0);
    for (i, c) in grid.classes.iter().enumerate() {
        if let NodeClass::Electrode(e) = c {
            assert_eq!(v[i], sol.state.metallic[*e]);
        }
    }
    for (f, face) in grid.faces.iter().enumerate() {
        let vm = sol.state.metallic[face.electrode];
        assert!((v[face.electrolyte_node] - (vm - sol.state.face_potential[f])).abs() <= tol);
    }
    // Interior and wall nodes both satisfy the finite-volume balance; on walls
    // that balance is the discrete zero-normal-flux condition.
    for i in 0..grid.len() {
        if grid.classes[i].is_electrolyte() && grid.face_at(i).is_none() {
            assert!(
                solver.laplace_defect(v, i).abs() <= 10.0 * tol / (h * h),
                "node {i}"
            );
        }
    }
    assert!(sol
        .report
        .flux_ratios
        .iter()
        .all(|r| r.ratio <= cfg.solver.flux_tolerance));
    assert!(sol.report.final_residual <= tol);
}

#[test]
fn walls_carry_no_normal_current_in_the_plate_cell() {
    let cfg = presets::two_plate(16, 7, 1.0, COPPER);
    let b = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    let grid = &b.grid;
    let tol = cfg.solver.tolerance;
    for i in 0..grid.len() {
        if grid.classes[i] != NodeClass::Wall {
            continue;
        }
        let c = grid.coords(i);
        for dir in Direction::ALL {
            let a = dir.axis.index();
            let on_this_wall =
                (dir.positive && c[a] + 1 == grid.dims[a]) || (!dir.positive && c[a] == 0);
            if !on_this_wall {
                continue;
            }
            let inward = Direction {
                axis: dir.axis,
                positive: !dir.positive,
            };
            let n = grid.neighbor(i, inward).unwrap();
            if grid.classes[n].is_electrolyte() {
                let g = (b.fields.potential[i] - b.fields.potential[n]) / grid.spacing[a];
                assert!(g.abs() <= 10.0 * tol / grid.spacing[a]);
            }
        }
    }
}

#[test]
fn red_black_sweeps_satisfy_the_same_invariants() {
    let cfg = presets::partial_bipolar([25, 13, 13], 8.0, COPPER);
    let lex = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    let rb = solve_cell(&cfg, RunOptions { parallel: true }, &mut |_| {}).unwrap();
    assert!(rb.report.converged);
    assert!(net_over_gross(&rb.grid, &rb.fields) < 10.0 * cfg.solver.flux_tolerance);
    let lex_flux = surface_flux(&lex.grid, &lex.fields, "anode").unwrap().net;
    let rb_flux = surface_flux(&rb.grid, &rb.fields, "anode").unwrap().net;
    assert!((lex_flux - rb_flux).abs() < 1e-4 * lex_flux.abs());

    let grid = discretize(&cfg).unwrap();
    let mut params = cfg.solver;
    params.order = SweepOrder::RedBlack;
    let threaded = Solver::new(&grid, cfg.kinetics, params)
        .solve(InitialGuess::Linear)
        .unwrap();
    let single = Solver::new(&grid, cfg.kinetics, params)
        .with_parallel(false)
        .solve(InitialGuess::Linear)
        .unwrap();
    assert_eq!(threaded.state.potential, single.state.potential);
}

#[test]
fn deterministic() {
    let cfg = presets::partial_bipolar([25, 13, 13], 8.0, COPPER);
    let a = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    let b = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    assert_eq!(a.fields, b.fields);
    assert_eq!(a.report.sweeps, b.report.sweeps);
}

#[test]
fn warm_start_from_a_converged_state() {
    let cfg = presets::two_plate(16, 5, 2.0, COPPER);
    let grid = discretize(&cfg).unwrap();
    let solver = Solver::new(&grid, cfg.kinetics, cfg.solver);
    let sol = solver.solve(InitialGuess::Linear).unwrap();
    let again = solver
        .solve(InitialGuess::State(Box::new(sol.state.clone())))
        .unwrap();
    assert!(again.report.sweeps <= 2, "{:?}", again.report);
}

#[test]
fn exhausted_budget_is_reported() {
    let mut cfg = presets::bipolar_series(32, 5, 5.0, COPPER);
    cfg.solver.max_sweeps = 10;
    let grid = discretize(&cfg).unwrap();
    match Solver::new(&grid, cfg.kinetics, cfg.solver).solve(InitialGuess::Linear) {
        Err(SolveError::NotConverged(sol)) => {
            assert!(!sol.report.converged);
            assert_eq!(sol.report.sweeps, 10);
            assert_eq!(sol.report.flux_ratios.len(), 1);
        }
        other => panic!("unexpected {other:?}"),
    }
    let b = solve_cell(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    assert!(!b.report.converged);
}

#[test]
fn over_relaxation_beyond_two_diverges() {
    let cfg = presets::two_plate(16, 5, 1.0, COPPER);
    let grid = discretize(&cfg).unwrap();
    let mut params = cfg.solver;
    params.relaxation_factor = 2.6;
    let r = Solver::new(&grid, cfg.kinetics, params).solve(InitialGuess::Linear);
    assert!(
        matches!(r, Err(SolveError::Diverged { .. })),
        "{:?}",
        r.map(|s| s.report)
    );
}
