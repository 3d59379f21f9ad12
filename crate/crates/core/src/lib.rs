//! Potential and current distribution in electrowinning cells with unipolar
//! and floating bipolar electrodes.
//!
//! The pipeline is [`model::build_cell`] → [`grid::discretize`] →
//! [`solver::Solver`] → [`field::compute_current_density`], after which the
//! [`field`] and [`trace`] tools query the result. [`solve_cell`] runs the
//! whole chain.

pub mod field;
pub mod grid;
pub mod io;
pub mod model;
pub mod presets;
pub mod solver;
pub mod trace;

use thiserror::Error;

pub use field::{FieldError, FieldSet};
pub use grid::{discretize, Grid, GridError};
pub use io::{BundleError, ConfigParseError, ResultBundle};
pub use model::{build_cell, CellConfig, ConfigError};
pub use solver::{ConvergenceReport, InitialGuess, Progress, SolveError, Solver};
pub use trace::{StreamlineSet, TraceError, TraceParams};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ConfigParseError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// How [`solve_cell`] relaxes the electrolyte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Red-black sweeps on worker threads instead of the lexicographic sweep.
    pub parallel: bool,
}

/// Validates, discretizes and solves a configuration.
///
/// A run that spends its sweep budget still yields a bundle; its report has
/// `converged == false`.
pub fn solve_cell(
    config: &CellConfig,
    options: RunOptions,
    observer: &mut dyn FnMut(Progress),
) -> Result<ResultBundle, Error> {
    let config = build_cell(config.clone())?;
    let grid = discretize(&config)?;
    let mut params = config.solver;
    if options.parallel {
        params.order = model::SweepOrder::RedBlack;
    }
    let solver = Solver::new(&grid, config.kinetics, params).with_parallel(options.parallel);
    let solution = match solver.solve_observed(InitialGuess::Linear, observer) {
        Ok(s) => s,
        Err(SolveError::NotConverged(s)) => *s,
        Err(e) => return Err(e.into()),
    };
    let fields =
        field::compute_current_density(&grid, &solution.state.potential, &solution.state.metallic)?;
    Ok(ResultBundle {
        config,
        grid,
        fields,
        report: solution.report,
    })
}
