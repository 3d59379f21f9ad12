//! Current-density streamlines.
//!
//! Lines are integrated along the unit direction of J with classical RK4 and
//! step doubling: each step is taken once at size `s` and once as two halves,
//! and the difference per unit length is the local error estimate.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, FieldSet};
use crate::grid::{Grid, GridError};
use crate::model::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid trace parameter `{field}`: {reason}")]
    InvalidParams {
        field: &'static str,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    /// Seed pitch in faces; 1 seeds every face.
    pub density: usize,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Admissible local error per unit arc length.
    pub error_tolerance: f64,
    pub max_vertices: usize,
    /// |J| floor as a fraction of the field's reference magnitude.
    pub singularity_threshold: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            density: 1,
            initial_step: 0.01,
            min_step: 1e-5,
            max_step: 0.02,
            error_tolerance: 1e-6,
            max_vertices: 5000,
            singularity_threshold: 1e-6,
        }
    }
}

impl TraceParams {
    /// Defaults with step sizes scaled to the finest grid spacing.
    pub fn for_grid(grid: &Grid) -> Self {
        let h = grid.spacing.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            initial_step: 0.5 * h,
            min_step: 1e-3 * h,
            max_step: h,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |field, reason| Err(TraceError::InvalidParams { field, reason });
        if self.density < 1 {
            return bad("density", "must be at least 1");
        }
        if !(self.min_step > 0.0
            && self.min_step <= self.initial_step
            && self.initial_step <= self.max_step)
        {
            return bad(
                "initial_step",
                "need 0 < min_step <= initial_step <= max_step",
            );
        }
        if !(self.error_tolerance > 0.0) {
            return bad("error_tolerance", "must be positive");
        }
        if self.max_vertices < 2 {
            return bad("max_vertices", "must be at least 2");
        }
        if !(self.singularity_threshold >= 0.0) {
            return bad("singularity_threshold", "must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// dx/ds = J / |J|
    AlongCurrent,
    /// dx/ds = -J / |J|
    AgainstCurrent,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::AlongCurrent => 1.0,
            Orientation::AgainstCurrent => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    DomainExit,
    Singularity,
    ElectrodeHit,
    MaxLength,
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streamline {
    pub electrode_id: String,
    pub orientation: Orientation,
    pub termination: Termination,
    /// Electrode entered by the last vertex, for `ElectrodeHit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_electrode: Option<String>,
    #[serde(with = "flat_points")]
    pub vertices: Vec<Vec3>,
    #[serde(rename = "V")]
    pub potential: Vec<f64>,
    #[serde(rename = "Jmag")]
    pub magnitude: Vec<f64>,
}

impl Streamline {
    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| distance(w[0], w[1])).sum()
    }
}

/// Serializes a point list as one flat `[x0, y0, z0, x1, ...]` array.
mod flat_points {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::model::Vec3;

    pub fn serialize<S: Serializer>(points: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(points.iter().flatten())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        let flat = Vec::<f64>::deserialize(d)?;
        if flat.len() % 3 != 0 {
            return Err(D::Error::custom(
                "vertex array length is not a multiple of 3",
            ));
        }
        Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamlineGroup {
    pub electrode_id: String,
    pub lines: Vec<Streamline>,
}

/// Lines grouped by seeding electrode, in request order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StreamlineSet {
    pub groups: Vec<StreamlineGroup>,
}

impl StreamlineSet {
    pub fn line_count(&self) -> usize {
        self.groups.iter().map(|g| g.lines.len()).sum()
    }

    pub fn group(&self, electrode_id: &str) -> Option<&StreamlineGroup> {
        self.groups.iter().find(|g| g.electrode_id == electrode_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub current: Vec3,
    pub potential: f64,
    pub magnitude: f64,
}

/// A vector field the tracer can follow.
pub trait FlowField: Sync {
    /// Lower and upper corners of the domain.
    fn bounds(&self) -> (Vec3, Vec3);
    /// Field at a point inside the bounds.
    fn sample(&self, p: Vec3) -> FlowSample;
    /// Index of the solid region containing `p`, if any.
    fn region_at(&self, _p: Vec3) -> Option<usize> {
        None
    }
    fn region_name(&self, region: usize) -> String {
        format!("region-{region}")
    }
    /// Magnitude the singularity threshold is relative to.
    fn reference_magnitude(&self) -> f64;
}

/// A solved cell seen as a flow field.
pub struct GridFlow<'a> {
    pub grid: &'a Grid,
    pub fields: &'a FieldSet,
    mean: f64,
}

impl<'a> GridFlow<'a> {
    pub fn new(grid: &'a Grid, fields: &'a FieldSet) -> Self {
        Self {
            grid,
            fields,
            mean: field::mean_magnitude(grid, fields),
        }
    }
}

impl FlowField for GridFlow<'_> {
    fn bounds(&self) -> (Vec3, Vec3) {
        ([0.0; 3], self.grid.size)
    }

    fn sample(&self, p: Vec3) -> FlowSample {
        match field::probe(self.grid, self.fields, p) {
            Ok(s) => FlowSample {
                current: s.current,
                potential: s.potential,
                magnitude: s.magnitude,
            },
            Err(_) => FlowSample {
                current: [0.0; 3],
                potential: f64::NAN,
                magnitude: 0.0,
            },
        }
    }

    fn region_at(&self, p: Vec3) -> Option<usize> {
        self.grid.electrode_at(p)
    }

    fn region_name(&self, region: usize) -> String {
        self.grid.electrodes[region].id.clone()
    }

    fn reference_magnitude(&self) -> f64 {
        self.mean
    }
}

fn distance(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn axpy(p: Vec3, s: f64, d: Vec3) -> Vec3 {
    [p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]]
}

/// Why a point cannot be integrated through.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Blocked {
    Outside,
    Region(usize),
    Weak,
}

struct Integrator<'f, F: FlowField + ?Sized> {
    field: &'f F,
    sign: f64,
    floor: f64,
    lo: Vec3,
    hi: Vec3,
}

impl<F: FlowField + ?Sized> Integrator<'_, F> {
    fn inside(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    fn check(&self, p: Vec3) -> Result<(), Blocked> {
        if !self.inside(p) {
            return Err(Blocked::Outside);
        }
        if let Some(r) = self.field.region_at(p) {
            return Err(Blocked::Region(r));
        }
        Ok(())
    }

    fn direction(&self, p: Vec3) -> Result<Vec3, Blocked> {
        self.check(p)?;
        let j = self.field.sample(p).current;
        let m = (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]).sqrt();
        if !(m > self.floor) {
            return Err(Blocked::Weak);
        }
        let k = self.sign / m;
        Ok([j[0] * k, j[1] * k, j[2] * k])
    }

    fn rk4(&self, p: Vec3, s: f64) -> Result<Vec3, Blocked> {
        let k1 = self.direction(p)?;
        let k2 = self.direction(axpy(p, 0.5 * s, k1))?;
        let k3 = self.direction(axpy(p, 0.5 * s, k2))?;
        let k4 = self.direction(axpy(p, s, k3))?;
        let q: Vec3 =
            std::array::from_fn(|a| p[a] + s / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]));
        self.check(q)?;
        Ok(q)
    }

    /// Point where the straight segment from `p` along `d` first becomes
    /// blocked within length `s`, if it does.
    fn clip(&self, p: Vec3, d: Vec3, s: f64) -> Option<(Vec3, Blocked)> {
        let end = axpy(p, s, d);
        let blocked = self.check(end).err()?;
        if blocked == Blocked::Outside {
            // Exact wall intersection.
            let mut t = s;
            for a in 0..3 {
                if d[a] > 0.0 && end[a] > self.hi[a] {
                    t = t.min((self.hi[a] - p[a]) / d[a]);
                } else if d[a] < 0.0 && end[a] < self.lo[a] {
                    t = t.min((self.lo[a] - p[a]) / d[a]);
                }
            }
            let mut q = axpy(p, t, d);
            for a in 0..3 {
                q[a] = q[a].clamp(self.lo[a], self.hi[a]);
            }
            if let Some(r) = self.field.region_at(q) {
                return Some((q, Blocked::Region(r)));
            }
            return Some((q, Blocked::Outside));
        }
        // Bisect for the last unblocked point.
        let (mut good, mut bad) = (0.0, s);
        for _ in 0..60 {
            let mid = 0.5 * (good + bad);
            if self.check(axpy(p, mid, d)).is_ok() {
                good = mid;
            } else {
                bad = mid;
            }
        }
        let q = axpy(p, good, d);
        let reason = self.check(axpy(p, bad, d)).err().unwrap_or(blocked);
        Some((q, reason))
    }
}

/// Integrates one line from `seed`.
pub fn trace<F: FlowField + ?Sized>(
    field: &F,
    seed: Vec3,
    electrode_id: &str,
    params: &TraceParams,
    orientation: Orientation,
) -> Streamline {
    let (lo, hi) = field.bounds();
    let it = Integrator {
        field,
        sign: orientation.sign(),
        floor: params.singularity_threshold * field.reference_magnitude(),
        lo,
        hi,
    };
    let mut line = Streamline {
        electrode_id: electrode_id.to_string(),
        orientation,
        termination: Termination::DomainExit,
        hit_electrode: None,
        vertices: Vec::new(),
        potential: Vec::new(),
        magnitude: Vec::new(),
    };
    let push = |line: &mut Streamline, p: Vec3| {
        let s = field.sample(p);
        line.vertices.push(p);
        line.potential.push(s.potential);
        line.magnitude.push(s.magnitude);
    };
    if !it.inside(seed) {
        return line;
    }
    push(&mut line, seed);
    if let Err(b) = it.direction(seed) {
        line.termination = match b {
            Blocked::Weak => Termination::Singularity,
            Blocked::Region(r) => {
                line.hit_electrode = Some(field.region_name(r));
                Termination::ElectrodeHit
            }
            Blocked::Outside => Termination::DomainExit,
        };
        return line;
    }

    let mut p = seed;
    let mut s = params.initial_step;
    loop {
        if line.vertices.len() >= params.max_vertices {
            line.termination = Termination::MaxLength;
            return line;
        }
        let d = match it.direction(p) {
            Ok(d) => d,
            Err(_) => {
                line.termination = Termination::Singularity;
                return line;
            }
        };
        if let Some((q, reason)) = it.clip(p, d, s) {
            // The boundary is within reach of the current step.
            if distance(p, q) > 0.0 {
                push(&mut line, q);
            }
            line.termination = match reason {
                Blocked::Region(r) => {
                    line.hit_electrode = Some(field.region_name(r));
                    Termination::ElectrodeHit
                }
                _ => Termination::DomainExit,
            };
            return line;
        }
        let full = it.rk4(p, s);
        let halves = it.rk4(p, 0.5 * s).and_then(|m| it.rk4(m, 0.5 * s));
        match (full, halves) {
            (Ok(a), Ok(b)) => {
                let err = distance(a, b) / s;
                if err > params.error_tolerance && s > params.min_step {
                    s = (0.5 * s).max(params.min_step);
                    continue;
                }
                p = b;
                push(&mut line, p);
                let m = line.magnitude.last().copied().unwrap_or(0.0);
                if !(m > it.floor) && it.direction(p).is_err() {
                    line.termination = Termination::Singularity;
                    return line;
                }
                if err < params.error_tolerance / 32.0 {
                    s = (2.0 * s).min(params.max_step);
                }
            }
            (full, halves) => {
                let weak =
                    matches!(full, Err(Blocked::Weak)) || matches!(halves, Err(Blocked::Weak));
                if s <= params.min_step {
                    line.termination = if weak {
                        Termination::Singularity
                    } else {
                        Termination::StepUnderflow
                    };
                    return line;
                }
                s = (0.5 * s).max(params.min_step);
            }
        }
    }
}

/// Seed point on an electrode surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub position: Vec3,
    pub normal: Vec3,
    pub face: usize,
}

/// Seeds half a cell outside the faces of an electrode, at every
/// `density`-th face along both in-plane axes of each side.
pub fn seed_electrode(
    grid: &Grid,
    electrode_id: &str,
    density: usize,
) -> Result<Vec<Seed>, TraceError> {
    if density < 1 {
        return Err(TraceError::InvalidParams {
            field: "density",
            reason: "must be at least 1",
        });
    }
    let e = grid.electrode_index(electrode_id)?;
    let range = grid.face_range(e);
    let faces = &grid.faces[range.clone()];
    let mut seeds = Vec::new();
    let mut start = 0;
    while start < faces.len() {
        let normal = faces[start].normal;
        let end = start
            + faces[start..]
                .iter()
                .take_while(|f| f.normal == normal)
                .count();
        let (b, c) = normal.axis.others();
        let side = &faces[start..end];
        let origin = side.iter().fold([usize::MAX; 2], |m, f| {
            let co = grid.coords(f.electrolyte_node);
            [m[0].min(co[b.index()]), m[1].min(co[c.index()])]
        });
        for (k, f) in side.iter().enumerate() {
            let co = grid.coords(f.electrolyte_node);
            if !(co[b.index()] - origin[0]).is_multiple_of(density)
                || !(co[c.index()] - origin[1]).is_multiple_of(density)
            {
                continue;
            }
            let n = normal.unit();
            let h = grid.spacing[normal.axis.index()];
            seeds.push(Seed {
                position: axpy(grid.node_position(f.electrolyte_node), 0.5 * h, n),
                normal: n,
                face: range.start + start + k,
            });
        }
        start = end;
    }
    Ok(seeds)
}

fn outward(flow: &GridFlow<'_>, seed: &Seed) -> Orientation {
    let j = flow.sample(seed.position).current;
    let jn = j[0] * seed.normal[0] + j[1] * seed.normal[1] + j[2] * seed.normal[2];
    if jn >= 0.0 {
        Orientation::AlongCurrent
    } else {
        Orientation::AgainstCurrent
    }
}

/// Seeds and traces every requested electrode, each line leaving its
/// electrode. Groups follow the order of `electrode_ids`, lines the seed
/// order, whichever way the work is scheduled.
pub fn trace_all(
    grid: &Grid,
    fields: &FieldSet,
    electrode_ids: &[&str],
    params: &TraceParams,
) -> Result<StreamlineSet, TraceError> {
    trace_all_with(grid, fields, electrode_ids, params, true)
}

/// [`trace_all`] with explicit control over worker threads.
pub fn trace_all_with(
    grid: &Grid,
    fields: &FieldSet,
    electrode_ids: &[&str],
    params: &TraceParams,
    parallel: bool,
) -> Result<StreamlineSet, TraceError> {
    params.validate()?;
    let flow = GridFlow::new(grid, fields);
    let mut jobs = Vec::new();
    for (g, id) in electrode_ids.iter().enumerate() {
        for seed in seed_electrode(grid, id, params.density)? {
            jobs.push((g, seed));
        }
    }
    let run = |(g, seed): &(usize, Seed)| {
        let orientation = outward(&flow, seed);
        (
            *g,
            trace(&flow, seed.position, electrode_ids[*g], params, orientation),
        )
    };
    let lines: Vec<(usize, Streamline)> = run_jobs(&jobs, run, parallel);
    let mut groups: Vec<StreamlineGroup> = electrode_ids
        .iter()
        .map(|id| StreamlineGroup {
            electrode_id: id.to_string(),
            lines: Vec::new(),
        })
        .collect();
    for (g, line) in lines {
        groups[g].lines.push(line);
    }
    Ok(StreamlineSet { groups })
}

#[cfg(feature = "parallel")]
fn run_jobs<J: Sync, T: Send>(
    jobs: &[J],
    run: impl Fn(&J) -> T + Sync + Send,
    parallel: bool,
) -> Vec<T> {
    if parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn run_jobs<J: Sync, T: Send>(
    jobs: &[J],
    run: impl Fn(&J) -> T + Sync + Send,
    _parallel: bool,
) -> Vec<T> {
    jobs.iter().map(run).collect()
}
