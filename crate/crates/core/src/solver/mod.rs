//! Iterative solution of the cell potential.
//!
//! Every sweep runs four phases in a fixed order:
//!
//! 1. the electrode potential `DV` of every interface face is recomputed from
//!    the linear polarization law, using the one-sided normal gradient
//!    towards the previous iterate of the electrolyte beyond the face;
//! 2. each interface node takes `V = V_m - DV` and acts as a Dirichlet value
//!    for its neighbours;
//! 3. the remaining electrolyte nodes are over-relaxed with the 7-point
//!    Laplace stencil, walls contributing no flux;
//! 4. every floating electrode moves its metallic potential by the damped
//!    mean potential step across its faces, which vanishes exactly when the
//!    net current through its surface is zero.
//!
//! Phase 1 is solved implicitly for the interface node: the normal gradient
//! depends on the interface value it produces, and the explicit
//! substitution is unstable once `K·σ/h` exceeds one.

mod relax;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridError, NodeClass};
use crate::model::{Axis, Kinetics, Role, SolverParams, SweepOrder};
use relax::FreeStencil;

/// Reaction type of an interface face, from the sign of `J·n̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// `J·n̂ > 0`: current leaves the metal into the electrolyte.
    Anodic,
    /// `J·n̂ <= 0`: current enters the metal; copper deposits here.
    Cathodic,
}

impl Polarity {
    pub fn of(normal_current: f64) -> Polarity {
        if normal_current > 0.0 {
            Polarity::Anodic
        } else {
            Polarity::Cathodic
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticsError {
    #[error("normal current density must be finite, got {0}")]
    NonFinite(f64),
}

/// Electrode potential `DV` (metal minus electrolyte) for a face carrying
/// normal current density `normal_current` = `J·n̂`.
///
/// Anodic faces follow `-e_A + K_A·J_n`; cathodic faces `+e_C - K_C·|J_n|`.
pub fn electrode_overpotential(
    normal_current: f64,
    polarity: Polarity,
    kinetics: &Kinetics,
) -> Result<f64, KineticsError> {
    if !normal_current.is_finite() {
        return Err(KineticsError::NonFinite(normal_current));
    }
    Ok(match polarity {
        Polarity::Anodic => -kinetics.e_a + kinetics.k_a * normal_current,
        Polarity::Cathodic => kinetics.e_c - kinetics.k_c * normal_current.abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxRatio {
    pub electrode_id: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub sweeps: usize,
    pub final_residual: f64,
    /// |net| / gross current through each floating electrode.
    pub flux_ratios: Vec<FluxRatio>,
    /// Faces whose polarity changed during the final sweep.
    pub oscillating_faces: Vec<usize>,
    pub duration_secs: f64,
}

/// Per-sweep progress delivered to solve observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub sweep: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    /// Potential at every node; electrode nodes hold their metallic potential.
    pub potential: Vec<f64>,
    /// Metallic potential per electrode, indexed like `Grid::electrodes`.
    pub metallic: Vec<f64>,
    /// Electrode potential `DV` per interface face.
    pub face_potential: Vec<f64>,
    pub polarity: Vec<Polarity>,
    pub sweeps: usize,
    pub residual_history: Vec<f64>,
    last_flips: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: SolveState,
    pub report: ConvergenceReport,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("the cell needs at least one anode and one cathode with a fixed potential")]
    MissingDrivingElectrodes,
    #[error("iteration diverged at sweep {sweep} (residual {residual:e}); lower omega or lambda")]
    Diverged { sweep: usize, residual: f64 },
    #[error("not converged after {} sweeps (residual {:e})", .0.report.sweeps, .0.report.final_residual)]
    NotConverged(Box<Solution>),
    #[error("electrode `{id}` is not a floating electrode")]
    NotFloating { id: String },
    #[error("electrode `{id}` has no interface faces")]
    NoFaces { id: String },
    #[error("state does not match the grid ({expected} nodes expected, got {actual})")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess {
    /// Linear ramp between the mean anode and mean cathode potentials along
    /// the axis separating them; floating electrodes start at the mean of the
    /// fixed potentials.
    #[default]
    Linear,
    /// Continue from a previous state on the same grid.
    State(Box<SolveState>),
}

/// Face coupling data cached for a sweep.
struct FaceCoupling {
    total: f64,
    /// σ / ΔS
    density_scale: f64,
}

/// Solver bound to one grid, kinetics law and parameter set.
pub struct Solver<'g> {
    grid: &'g Grid,
    kinetics: Kinetics,
    params: SolverParams,
    stencil: FreeStencil,
    couplings: Vec<FaceCoupling>,
    electrode_nodes: Vec<Vec<usize>>,
    parallel: bool,
}

impl<'g> Solver<'g> {
    pub fn new(grid: &'g Grid, kinetics: Kinetics, params: SolverParams) -> Self {
        let couplings = grid
            .faces
            .iter()
            .map(|f| FaceCoupling {
                total: f.total_conductance(),
                density_scale: grid.conductivity / f.area,
            })
            .collect();
        let mut electrode_nodes = vec![Vec::new(); grid.electrodes.len()];
        for (idx, class) in grid.classes.iter().enumerate() {
            if let NodeClass::Electrode(e) = class {
                electrode_nodes[*e].push(idx);
            }
        }
        Self {
            grid,
            kinetics,
            params,
            stencil: FreeStencil::new(grid),
            couplings,
            electrode_nodes,
            parallel: true,
        }
    }

    /// Whether red-black sweeps may use worker threads (on by default; has
    /// no effect without the `parallel` feature).
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn free_node_count(&self) -> usize {
        self.stencil.len()
    }

    fn check_drivers(&self) -> Result<(), SolveError> {
        let has = |role| {
            self.grid
                .electrodes
                .iter()
                .any(|e| e.role == role && e.fixed_potential.is_some())
        };
        if has(Role::Anode) && has(Role::Cathode) {
            Ok(())
        } else {
            Err(SolveError::MissingDrivingElectrodes)
        }
    }

    /// Builds the starting state.
    pub fn initial_state(&self, guess: InitialGuess) -> Result<SolveState, SolveError> {
        self.check_drivers()?;
        let grid = self.grid;
        if let InitialGuess::State(state) = guess {
            if state.potential.len() != grid.len() {
                return Err(SolveError::DimensionMismatch {
                    expected: grid.len(),
                    actual: state.potential.len(),
                });
            }
            let mut state = *state;
            state.sweeps = 0;
            state.residual_history.clear();
            return Ok(state);
        }

        let fixed: Vec<f64> = grid
            .electrodes
            .iter()
            .filter_map(|e| e.fixed_potential)
            .collect();
        let floating_start = fixed.iter().sum::<f64>() / fixed.len() as f64;
        let metallic: Vec<f64> = grid
            .electrodes
            .iter()
            .map(|e| e.fixed_potential.unwrap_or(floating_start))
            .collect();

        let ramp = self.linear_ramp();
        let mut potential = vec![0.0; grid.len()];
        for (idx, v) in potential.iter_mut().enumerate() {
            *v = match grid.classes[idx] {
                NodeClass::Electrode(e) => metallic[e],
                _ => ramp(grid.node_position(idx)),
            };
        }

        let mut state = SolveState {
            potential,
            metallic,
            face_potential: vec![0.0; grid.faces.len()],
            polarity: vec![Polarity::Cathodic; grid.faces.len()],
            sweeps: 0,
            residual_history: Vec::new(),
            last_flips: Vec::new(),
        };
        for (i, f) in grid.faces.iter().enumerate() {
            let v = state.potential[f.electrolyte_node];
            state.polarity[i] = Polarity::of(self.normal_current(&state.potential, i, v));
            state.face_potential[i] = state.metallic[f.electrode] - v;
        }
        Ok(state)
    }

    fn linear_ramp(&self) -> impl Fn([f64; 3]) -> f64 {
        let grid = self.grid;
        let mean = |role: Role| -> (f64, [f64; 3], [f64; 3], [f64; 3]) {
            let sel: Vec<_> = grid
                .electrodes
                .iter()
                .filter(|e| e.role == role && e.fixed_potential.is_some())
                .collect();
            let n = sel.len() as f64;
            let mut v = 0.0;
            let mut centre = [0.0; 3];
            let mut lo = [0.0; 3];
            let mut hi = [0.0; 3];
            for e in &sel {
                v += e.fixed_potential.unwrap_or(0.0) / n;
                for a in 0..3 {
                    centre[a] += 0.5 * (e.snapped.min[a] + e.snapped.max[a]) / n;
                    lo[a] += e.snapped.min[a] / n;
                    hi[a] += e.snapped.max[a] / n;
                }
            }
            (v, centre, lo, hi)
        };
        let (va, ca, alo, ahi) = mean(Role::Anode);
        let (vc, cc, clo, chi) = mean(Role::Cathode);
        let axis = (0..3)
            .max_by(|&a, &b| (cc[a] - ca[a]).abs().total_cmp(&(cc[b] - ca[b]).abs()))
            .unwrap_or(0);
        let (start, end) = if ca[axis] <= cc[axis] {
            (ahi[axis], clo[axis])
        } else {
            (alo[axis], chi[axis])
        };
        move |p: [f64; 3]| {
            let span = end - start;
            let t = if span.abs() > 0.0 {
                ((p[axis] - start) / span).clamp(0.0, 1.0)
            } else {
                0.5
            };
            va + (vc - va) * t
        }
    }

    /// `J·n̂` on face `face` when its interface node holds `v_int`.
    fn normal_current(&self, potential: &[f64], face: usize, v_int: f64) -> f64 {
        let f = &self.grid.faces[face];
        let flow: f64 = f
            .links
            .iter()
            .map(|l| l.conductance * (v_int - potential[l.node]))
            .sum();
        flow * self.couplings[face].density_scale
    }

    /// One four-phase sweep. Returns the largest change of any unknown,
    /// metallic potentials included.
    pub fn sweep_once(&self, state: &mut SolveState) -> Result<f64, SolveError> {
        let grid = self.grid;
        if state.potential.len() != grid.len() {
            return Err(SolveError::DimensionMismatch {
                expected: grid.len(),
                actual: state.potential.len(),
            });
        }
        let k = &self.kinetics;
        let rest_anodic = -k.e_a;
        let rest_cathodic = k.e_c;

        // Phase 1: face potentials from the previous iterate.
        state.last_flips.clear();
        let mut targets = Vec::with_capacity(grid.faces.len());
        for (i, f) in grid.faces.iter().enumerate() {
            let vm = state.metallic[f.electrode];
            let c = &self.couplings[i];
            let weighted: f64 = f
                .links
                .iter()
                .map(|l| l.conductance * state.potential[l.node])
                .sum();
            // Potential the interface node would float at with no current.
            let open_circuit = if c.total > 0.0 {
                weighted / c.total
            } else {
                vm
            };
            let drive = vm - open_circuit;
            let anodic_ok = drive > rest_anodic;
            let cathodic_ok = drive <= rest_cathodic;
            let previous = state.polarity[i];
            let branch = match (anodic_ok, cathodic_ok) {
                (true, true) => Some(previous),
                (true, false) => Some(Polarity::Anodic),
                (false, true) => Some(Polarity::Cathodic),
                (false, false) => None,
            };
            let v_int = match branch {
                // No electrolyte beyond the face: it carries no current.
                _ if c.total == 0.0 => {
                    let rest = match previous {
                        Polarity::Anodic => rest_anodic,
                        Polarity::Cathodic => rest_cathodic,
                    };
                    vm - rest
                }
                Some(p) => {
                    let (rest, slope) = match p {
                        Polarity::Anodic => (rest_anodic, k.k_a),
                        Polarity::Cathodic => (rest_cathodic, k.k_c),
                    };
                    let s = slope * c.density_scale;
                    (vm - rest + s * weighted) / (1.0 + s * c.total)
                }
                // Between the two rest potentials no current flows.
                None => open_circuit,
            };
            let polarity = if c.total == 0.0 {
                previous
            } else {
                branch.unwrap_or(Polarity::Cathodic)
            };
            if polarity != previous {
                state.last_flips.push(i);
            }
            state.polarity[i] = polarity;
            state.face_potential[i] = vm - v_int;
            targets.push(v_int);
        }

        // Phase 2: interface nodes.
        let mut residual = 0.0f64;
        for (f, &v_int) in grid.faces.iter().zip(&targets) {
            let slot = &mut state.potential[f.electrolyte_node];
            residual = residual.max((v_int - *slot).abs());
            *slot = v_int;
        }

        // Phase 3: free electrolyte.
        let omega = self.params.relaxation_factor;
        let change = match self.params.order {
            SweepOrder::Lexicographic => self
                .stencil
                .sweep_lexicographic(&mut state.potential, omega),
            SweepOrder::RedBlack => {
                self.stencil
                    .sweep_red_black(&mut state.potential, omega, self.parallel)
            }
        };
        residual = residual.max(change);

        // Phase 4: floating electrodes.
        for e in 0..grid.electrodes.len() {
            if !grid.electrodes[e].is_floating() || grid.face_range(e).is_empty() {
                continue;
            }
            let old = state.metallic[e];
            let new = self.floating_update(state, e, self.params.floating_damping);
            self.set_metallic(state, e, new);
            residual = residual.max((new - old).abs());
        }

        if state.residual_history.is_empty() && !residual.is_finite() {
            return Err(SolveError::Diverged {
                sweep: state.sweeps + 1,
                residual,
            });
        }
        if let Some(&first) = state.residual_history.first() {
            let reference = first.max(self.params.tolerance);
            if !residual.is_finite() || residual > 1e6 * reference {
                return Err(SolveError::Diverged {
                    sweep: state.sweeps + 1,
                    residual,
                });
            }
        }
        state.sweeps += 1;
        state.residual_history.push(residual);
        Ok(residual)
    }

    fn floating_update(&self, state: &SolveState, e: usize, damping: f64) -> f64 {
        let mut step = 0.0;
        let mut weight = 0.0;
        for i in self.grid.face_range(e) {
            let f = &self.grid.faces[i];
            let v_int = state.potential[f.electrolyte_node];
            for l in &f.links {
                step += l.conductance * (state.potential[l.node] - v_int);
                weight += l.conductance;
            }
        }
        if weight > 0.0 {
            state.metallic[e] + damping * step / weight
        } else {
            state.metallic[e]
        }
    }

    fn set_metallic(&self, state: &mut SolveState, e: usize, v: f64) {
        state.metallic[e] = v;
        for &n in &self.electrode_nodes[e] {
            state.potential[n] = v;
        }
    }

    /// Moves the metallic potential of a floating electrode by the damped
    /// conductance-weighted mean step `V(x + ds) - V(x)` across its faces.
    /// On a uniform grid this is the plain mean over the N faces.
    pub fn update_floating_potential(
        &self,
        state: &mut SolveState,
        electrode_id: &str,
        damping: f64,
    ) -> Result<f64, SolveError> {
        let e = self.grid.electrode_index(electrode_id)?;
        if !self.grid.electrodes[e].is_floating() {
            return Err(SolveError::NotFloating {
                id: electrode_id.to_string(),
            });
        }
        if self.grid.face_range(e).is_empty() {
            return Err(SolveError::NoFaces {
                id: electrode_id.to_string(),
            });
        }
        let new = self.floating_update(state, e, damping);
        self.set_metallic(state, e, new);
        Ok(new)
    }

    /// |net| / gross electrolyte current through electrode `e`.
    ///
    /// The gross current is floored at the current a potential error of one
    /// `tolerance` on every face link would carry, divided by
    /// `flux_tolerance`. A plate that carries no measurable current is
    /// balanced by definition rather than by the ratio of two round-off
    /// sized numbers.
    pub fn flux_ratio(&self, state: &SolveState, e: usize) -> f64 {
        let mut net = 0.0;
        let mut gross = 0.0;
        let mut conductance = 0.0;
        for i in self.grid.face_range(e) {
            let f = &self.grid.faces[i];
            let flow =
                self.normal_current(&state.potential, i, state.potential[f.electrolyte_node])
                    * f.area;
            net += flow;
            gross += flow.abs();
            conductance += self.couplings[i].total;
        }
        let resolvable = self.grid.conductivity * self.params.tolerance * conductance;
        let scale = gross.max(resolvable / self.params.flux_tolerance);
        if scale > 0.0 {
            net.abs() / scale
        } else {
            0.0
        }
    }

    fn flux_ratios(&self, state: &SolveState) -> Vec<FluxRatio> {
        self.grid
            .electrodes
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_floating())
            .map(|(i, e)| FluxRatio {
                electrode_id: e.id.clone(),
                ratio: self.flux_ratio(state, i),
            })
            .collect()
    }

    /// Runs sweeps until both the potential change and every floating-flux
    /// ratio are within tolerance, or the sweep budget is spent.
    pub fn solve(&self, guess: InitialGuess) -> Result<Solution, SolveError> {
        self.solve_observed(guess, &mut |_| {})
    }

    pub fn solve_observed(
        &self,
        guess: InitialGuess,
        observer: &mut dyn FnMut(Progress),
    ) -> Result<Solution, SolveError> {
        let started = Instant::now();
        let mut state = self.initial_state(guess)?;
        let tol = self.params.tolerance;
        let flux_tol = self.params.flux_tolerance;
        let mut residual = f64::INFINITY;
        let mut converged = false;
        for _ in 0..self.params.max_sweeps {
            residual = self.sweep_once(&mut state)?;
            observer(Progress {
                sweep: state.sweeps,
                residual,
            });
            if residual <= tol && self.flux_ratios(&state).iter().all(|r| r.ratio <= flux_tol) {
                converged = true;
                break;
            }
        }
        let report = ConvergenceReport {
            converged,
            sweeps: state.sweeps,
            final_residual: residual,
            flux_ratios: self.flux_ratios(&state),
            oscillating_faces: state.last_flips.clone(),
            duration_secs: started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "solve finished: converged={} sweeps={} residual={:e}",
            converged,
            report.sweeps,
            residual
        );
        let solution = Solution { state, report };
        if converged {
            Ok(solution)
        } else {
            Err(SolveError::NotConverged(Box::new(solution)))
        }
    }

    /// Discrete Laplace defect `Σ G (V_nb - V) / volume` at a free node, in V/m².
    pub fn laplace_defect(&self, potential: &[f64], idx: usize) -> f64 {
        let grid = self.grid;
        let c = grid.coords(idx);
        let mut flow = 0.0;
        for dir in crate::grid::Direction::ALL {
            if let Some(n) = grid.neighbor(idx, dir) {
                flow += grid.link_conductance(idx, dir.axis) * (potential[n] - potential[idx]);
            }
        }
        let volume: f64 = Axis::ALL
            .iter()
            .map(|a| grid.dual_width(a.index(), c[a.index()]))
            .product();
        flow / volume
    }
}

/// Solves the grid with the given kinetics and parameters.
pub fn solve(
    grid: &Grid,
    kinetics: &Kinetics,
    params: &SolverParams,
    guess: InitialGuess,
) -> Result<Solution, SolveError> {
    Solver::new(grid, *kinetics, *params).solve(guess)
}
