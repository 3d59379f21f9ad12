//! Current density and the analysis tools built on a converged potential.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Direction, Grid, GridError, NodeClass};
use crate::model::{Axis, Vec3};
use crate::solver::Polarity;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("point ({}, {}, {}) lies outside the cell", .point[0], .point[1], .point[2])]
    OutOfDomain { point: Vec3 },
    #[error("field has {actual} values, grid has {expected} nodes")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Potential, current density and its magnitude on every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub potential: Vec<f64>,
    /// J = -σ∇V in A/m²; zero inside electrodes.
    pub current: Vec<Vec3>,
    pub magnitude: Vec<f64>,
    /// Metallic potential of each electrode, indexed like `Grid::electrodes`.
    pub metallic: Vec<f64>,
}

impl FieldSet {
    pub fn component(&self, axis: Axis) -> Vec<f64> {
        self.current.iter().map(|j| j[axis.index()]).collect()
    }
}

fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Derivative of V along `axis` at electrolyte node `idx`.
///
/// Central where both neighbours are electrolyte, one-sided towards the
/// electrolyte next to an electrode, and zero across a dielectric wall.
fn gradient_component(grid: &Grid, potential: &[f64], idx: usize, axis: Axis) -> f64 {
    let a = axis.index();
    let c = grid.coords(idx)[a];
    if c == 0 || c + 1 == grid.dims[a] {
        return 0.0;
    }
    let h = grid.spacing[a];
    let lo = grid
        .neighbor(
            idx,
            Direction {
                axis,
                positive: false,
            },
        )
        .unwrap_or(idx);
    let hi = grid
        .neighbor(
            idx,
            Direction {
                axis,
                positive: true,
            },
        )
        .unwrap_or(idx);
    match (
        grid.classes[lo].is_electrolyte(),
        grid.classes[hi].is_electrolyte(),
    ) {
        (true, true) => (potential[hi] - potential[lo]) / (2.0 * h),
        (false, true) => (potential[hi] - potential[idx]) / h,
        (true, false) => (potential[idx] - potential[lo]) / h,
        (false, false) => 0.0,
    }
}

/// Builds the field set of a potential solution.
pub fn compute_current_density(
    grid: &Grid,
    potential: &[f64],
    metallic: &[f64],
) -> Result<FieldSet, FieldError> {
    if potential.len() != grid.len() {
        return Err(FieldError::DimensionMismatch {
            expected: grid.len(),
            actual: potential.len(),
        });
    }
    if metallic.len() != grid.electrodes.len() {
        return Err(FieldError::DimensionMismatch {
            expected: grid.electrodes.len(),
            actual: metallic.len(),
        });
    }
    let sigma = grid.conductivity;
    let current: Vec<Vec3> = (0..grid.len())
        .map(|idx| {
            if !grid.classes[idx].is_electrolyte() {
                return [0.0; 3];
            }
            Axis::ALL.map(|axis| -sigma * gradient_component(grid, potential, idx, axis))
        })
        .collect();
    let magnitude = current.iter().map(|&j| norm(j)).collect();
    Ok(FieldSet {
        potential: potential.to_vec(),
        current,
        magnitude,
        metallic: metallic.to_vec(),
    })
}

/// Lower corner of the enclosing lattice cell and the fractional offsets in it.
fn locate(grid: &Grid, p: Vec3) -> Result<([usize; 3], Vec3), FieldError> {
    let mut base = [0; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        if !(p[a].is_finite() && p[a] >= 0.0 && p[a] <= grid.size[a]) {
            return Err(FieldError::OutOfDomain { point: p });
        }
        let mut s = p[a] / grid.spacing[a];
        let nearest = s.round();
        if (s - nearest).abs() < 1e-9 {
            s = nearest;
        }
        let i = (s.floor() as usize).min(grid.dims[a] - 2);
        base[a] = i;
        frac[a] = s - i as f64;
    }
    Ok((base, frac))
}

fn corners(grid: &Grid, base: [usize; 3], frac: Vec3) -> [(usize, f64); 8] {
    let mut out = [(0, 0.0); 8];
    for (n, slot) in out.iter_mut().enumerate() {
        let (di, dj, dk) = (n & 1, (n >> 1) & 1, (n >> 2) & 1);
        let w = |d: usize, t: f64| if d == 1 { t } else { 1.0 - t };
        *slot = (
            grid.index(base[0] + di, base[1] + dj, base[2] + dk),
            w(di, frac[0]) * w(dj, frac[1]) * w(dk, frac[2]),
        );
    }
    out
}

/// Trilinear interpolation of a nodal scalar.
pub fn sample_trilinear(grid: &Grid, values: &[f64], p: Vec3) -> Result<f64, FieldError> {
    let (base, frac) = locate(grid, p)?;
    Ok(corners(grid, base, frac)
        .iter()
        .map(|&(i, w)| w * values[i])
        .sum())
}

/// Trilinear interpolation of a nodal vector, component by component.
pub fn sample_trilinear_vec(grid: &Grid, values: &[Vec3], p: Vec3) -> Result<Vec3, FieldError> {
    let (base, frac) = locate(grid, p)?;
    let mut out = [0.0; 3];
    for (i, w) in corners(grid, base, frac) {
        for a in 0..3 {
            out[a] += w * values[i][a];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub position: Vec3,
    #[serde(rename = "V")]
    pub potential: f64,
    #[serde(rename = "J")]
    pub current: Vec3,
    #[serde(rename = "Jmag")]
    pub magnitude: f64,
    /// `"electrolyte"` or the id of the electrode containing the point.
    pub region: String,
}

/// Samples V, J and |J| at `p`. Inside an electrode volume the potential is
/// the electrode's metallic potential and no current flows.
pub fn probe(grid: &Grid, fields: &FieldSet, p: Vec3) -> Result<ProbeSample, FieldError> {
    let (base, frac) = locate(grid, p)?;
    if let Some(e) = grid.electrode_at(p) {
        return Ok(ProbeSample {
            position: p,
            potential: fields.metallic[e],
            current: [0.0; 3],
            magnitude: 0.0,
            region: grid.electrodes[e].id.clone(),
        });
    }
    let weights = corners(grid, base, frac);
    let mut potential = 0.0;
    let mut current = [0.0; 3];
    let mut magnitude = 0.0;
    for (i, w) in weights {
        potential += w * fields.potential[i];
        for a in 0..3 {
            current[a] += w * fields.current[i][a];
        }
        magnitude += w * fields.magnitude[i];
    }
    Ok(ProbeSample {
        position: p,
        potential,
        current,
        magnitude,
        region: "electrolyte".to_string(),
    })
}

/// Scalar shown on a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "V")]
    Potential,
    #[serde(rename = "Jmag")]
    CurrentMagnitude,
}

impl std::str::FromStr for Quantity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "V" | "v" => Ok(Quantity::Potential),
            "Jmag" | "jmag" | "|J|" => Ok(Quantity::CurrentMagnitude),
            other => Err(format!("unknown quantity `{other}` (expected V or Jmag)")),
        }
    }
}

/// A plane of samples at the grid nodes lying in it.
///
/// `values` is row-major: row `r` runs along `col_axis` at the `r`-th node
/// of `row_axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceImage {
    pub axis: Axis,
    pub coord: f64,
    pub quantity: Quantity,
    pub row_axis: Axis,
    pub col_axis: Axis,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl SliceImage {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// 3D position of a pixel.
    pub fn position(&self, grid: &Grid, row: usize, col: usize) -> Vec3 {
        let mut p = [0.0; 3];
        p[self.axis.index()] = self.coord;
        p[self.row_axis.index()] = row as f64 * grid.spacing[self.row_axis.index()];
        p[self.col_axis.index()] = col as f64 * grid.spacing[self.col_axis.index()];
        p
    }
}

pub fn extract_slice(
    grid: &Grid,
    fields: &FieldSet,
    axis: Axis,
    coord: f64,
    quantity: Quantity,
) -> Result<SliceImage, FieldError> {
    let (row_axis, col_axis) = axis.others();
    let rows = grid.dims[row_axis.index()];
    let cols = grid.dims[col_axis.index()];
    let mut image = SliceImage {
        axis,
        coord,
        quantity,
        row_axis,
        col_axis,
        rows,
        cols,
        values: Vec::with_capacity(rows * cols),
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };
    for r in 0..rows {
        for c in 0..cols {
            let sample = probe(grid, fields, image.position(grid, r, c))?;
            let v = match quantity {
                Quantity::Potential => sample.potential,
                Quantity::CurrentMagnitude => sample.magnitude,
            };
            image.min = image.min.min(v);
            image.max = image.max.max(v);
            image.values.push(v);
        }
    }
    Ok(image)
}

/// `J·n̂` on interface face `face`, from the electrolyte links of its
/// interface node. On a face interior this is the two-point one-sided
/// difference `σ (V_int - V_out) / h`.
pub fn face_normal_current(grid: &Grid, potential: &[f64], face: usize) -> f64 {
    let f = &grid.faces[face];
    let v_int = potential[f.electrolyte_node];
    let flow: f64 = f
        .links
        .iter()
        .map(|l| l.conductance * (v_int - potential[l.node]))
        .sum();
    flow * (grid.conductivity / f.area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositFace {
    pub face: usize,
    /// Position of the interface node on the electrode surface.
    pub position: Vec3,
    pub normal: Vec3,
    pub area: f64,
    pub normal_current: f64,
    pub polarity: Polarity,
}

impl DepositFace {
    /// Cathodic faces receive copper.
    pub fn receives_deposit(&self) -> bool {
        self.polarity == Polarity::Cathodic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositMap {
    pub electrode_id: String,
    pub faces: Vec<DepositFace>,
}

pub fn normal_current_map(
    grid: &Grid,
    fields: &FieldSet,
    electrode_id: &str,
) -> Result<DepositMap, FieldError> {
    let e = grid.electrode_index(electrode_id)?;
    let faces = grid
        .face_range(e)
        .map(|i| {
            let f = &grid.faces[i];
            let jn = face_normal_current(grid, &fields.potential, i);
            DepositFace {
                face: i,
                position: grid.node_position(f.electrolyte_node),
                normal: f.normal.unit(),
                area: f.area,
                normal_current: jn,
                polarity: Polarity::of(jn),
            }
        })
        .collect();
    Ok(DepositMap {
        electrode_id: electrode_id.to_string(),
        faces,
    })
}

/// Net and gross current through an electrode surface, in amperes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFlux {
    pub net: f64,
    pub gross: f64,
}

impl SurfaceFlux {
    /// |net| / gross, or 0 when no current crosses the surface.
    pub fn imbalance(&self) -> f64 {
        if self.gross > 0.0 {
            self.net.abs() / self.gross
        } else {
            0.0
        }
    }
}

pub fn surface_flux(
    grid: &Grid,
    fields: &FieldSet,
    electrode_id: &str,
) -> Result<SurfaceFlux, FieldError> {
    let e = grid.electrode_index(electrode_id)?;
    Ok(surface_flux_of(grid, &fields.potential, e))
}

pub(crate) fn surface_flux_of(grid: &Grid, potential: &[f64], e: usize) -> SurfaceFlux {
    let mut net = 0.0;
    let mut gross = 0.0;
    for i in grid.face_range(e) {
        let flow = face_normal_current(grid, potential, i) * grid.faces[i].area;
        net += flow;
        gross += flow.abs();
    }
    SurfaceFlux { net, gross }
}

/// Mean |J| over the electrolyte nodes.
pub fn mean_magnitude(grid: &Grid, fields: &FieldSet) -> f64 {
    let (sum, n) = grid
        .classes
        .iter()
        .zip(&fields.magnitude)
        .filter(|(c, _)| c.is_electrolyte())
        .fold((0.0, 0usize), |(s, n), (_, m)| (s + m, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Largest spread of node potentials within any electrode volume.
pub fn electrode_spread(grid: &Grid, potential: &[f64]) -> f64 {
    let mut lo = vec![f64::INFINITY; grid.electrodes.len()];
    let mut hi = vec![f64::NEG_INFINITY; grid.electrodes.len()];
    for (idx, class) in grid.classes.iter().enumerate() {
        if let NodeClass::Electrode(e) = class {
            lo[*e] = lo[*e].min(potential[idx]);
            hi[*e] = hi[*e].max(potential[idx]);
        }
    }
    lo.iter()
        .zip(&hi)
        .filter(|(l, _)| l.is_finite())
        .map(|(l, h)| h - l)
        .fold(0.0, f64::max)
}
