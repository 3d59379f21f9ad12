//! Declarative cell description and its validation.
//!
//! A [`CellConfig`] is the user-facing description of a rectangular
//! electrowinning cell: the box dimensions, the electrolyte conductivity,
//! the electrodes (unipolar anodes and cathodes with a fixed metallic
//! potential, and floating bipolar plates whose potential is solved for),
//! the linearized electrode kinetics and the iteration controls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or extent in metres, indexed x, y, z.
pub type Vec3 = [f64; 3];

/// Coordinate axis of the cell box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Axis {
        match i {
            0 => Axis::X,
            1 => Axis::Y,
            2 => Axis::Z,
            _ => panic!("axis index {i} out of range"),
        }
    }

    /// The two remaining axes, in increasing order.
    pub fn others(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(format!("unknown axis `{other}` (expected x, y or z)")),
        }
    }
}

/// Axis-aligned box given by its minimum and maximum corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoxRegion {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// True when the open interiors of the two boxes intersect.
    pub fn overlaps(&self, other: &BoxRegion) -> bool {
        (0..3).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Anode,
    Cathode,
    Bipolar,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Anode => "anode",
            Role::Cathode => "cathode",
            Role::Bipolar => "bipolar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeSpec {
    pub id: String,
    pub role: Role,
    #[serde(rename = "box")]
    pub region: BoxRegion,
    /// Metallic potential in volts; present for anodes and cathodes only.
    #[serde(skip_serializing_if = "Option::is_none", rename = "potential")]
    pub metallic_potential: Option<f64>,
}

impl ElectrodeSpec {
    pub fn anode(id: impl Into<String>, region: BoxRegion, potential: f64) -> Self {
        Self {
            id: id.into(),
            role: Role::Anode,
            region,
            metallic_potential: Some(potential),
        }
    }

    pub fn cathode(id: impl Into<String>, region: BoxRegion, potential: f64) -> Self {
        Self {
            id: id.into(),
            role: Role::Cathode,
            region,
            metallic_potential: Some(potential),
        }
    }

    pub fn bipolar(id: impl Into<String>, region: BoxRegion) -> Self {
        Self {
            id: id.into(),
            role: Role::Bipolar,
            region,
            metallic_potential: None,
        }
    }
}

/// Linearized polarization law of the anodic and cathodic half reactions.
///
/// The zero-current electrode potential is `-e_a` on anodic faces and `+e_c`
/// on cathodic faces; `k_a` and `k_c` are the slopes in V·m²/A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinetics {
    #[serde(rename = "e_A")]
    pub e_a: f64,
    #[serde(rename = "e_C")]
    pub e_c: f64,
    #[serde(rename = "K_A")]
    pub k_a: f64,
    #[serde(rename = "K_C")]
    pub k_c: f64,
}

impl Kinetics {
    /// Ideal electrodes: no potential jump at the interface.
    pub const IDEAL: Kinetics = Kinetics {
        e_a: 0.0,
        e_c: 0.0,
        k_a: 0.0,
        k_c: 0.0,
    };
}

impl Default for Kinetics {
    fn default() -> Self {
        Self {
            e_a: 0.2,
            e_c: 0.34,
            k_a: 1e-3,
            k_c: 1e-3,
        }
    }
}

/// Order in which free electrolyte nodes are relaxed during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// In-place lexicographic sweep, x fastest. Deterministic and sequential.
    #[default]
    Lexicographic,
    /// Red-black colouring; each colour is relaxed independently and in
    /// parallel when the `parallel` feature is enabled.
    RedBlack,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    #[serde(rename = "omega")]
    pub relaxation_factor: f64,
    #[serde(rename = "lambda")]
    pub floating_damping: f64,
    /// Largest change of any unknown in one sweep, in volts.
    pub tolerance: f64,
    /// Largest admissible |net| / gross flux through a floating electrode.
    pub flux_tolerance: f64,
    pub max_sweeps: usize,
    #[serde(skip)]
    pub order: SweepOrder,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            relaxation_factor: 1.8,
            floating_damping: 1.0,
            tolerance: 1e-8,
            flux_tolerance: 1e-3,
            max_sweeps: 50_000,
            order: SweepOrder::Lexicographic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub cell_size: Vec3,
    pub conductivity: f64,
    pub grid: GridSpec,
    pub electrodes: Vec<ElectrodeSpec>,
    pub kinetics: Kinetics,
    pub solver: SolverParams,
}

impl CellConfig {
    pub fn electrode(&self, id: &str) -> Option<&ElectrodeSpec> {
        self.electrodes.iter().find(|e| e.id == id)
    }

    /// Same configuration with every fixed metallic potential shifted by `dv`.
    pub fn shifted_potentials(&self, dv: f64) -> CellConfig {
        let mut out = self.clone();
        for e in &mut out.electrodes {
            if let Some(v) = e.metallic_potential.as_mut() {
                *v += dv;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("`{field}` must be positive")]
    NonPositive { field: String },
    #[error("`{field}` is invalid: {reason}")]
    InvalidParameter { field: String, reason: String },
    #[error("electrodes `{first}` and `{second}` overlap")]
    OverlappingElectrodes { first: String, second: String },
    #[error("electrode `{id}` is not strictly inside the cell")]
    ElectrodeOutsideCell { id: String },
    #[error("electrode `{id}` has an empty or inverted box")]
    DegenerateBox { id: String },
    #[error("electrode id `{id}` is used more than once")]
    DuplicateId { id: String },
    #[error("{role} electrode `{id}` needs a metallic potential")]
    MissingPotential { id: String, role: &'static str },
    #[error("bipolar electrode `{id}` must not set a potential; it is solved for")]
    UnexpectedPotential { id: String },
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::NonPositive {
            field: field.to_string(),
        })
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidParameter {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Checks every configuration invariant and hands the configuration back
/// unchanged when they all hold.
pub fn build_cell(config: CellConfig) -> Result<CellConfig, ConfigError> {
    for (a, &len) in config.cell_size.iter().enumerate() {
        positive(&format!("cell_size[{a}]"), len)?;
    }
    positive("conductivity", config.conductivity)?;
    for (a, &n) in config.grid.dims.iter().enumerate() {
        if n < 4 {
            return Err(invalid(
                &format!("grid.dims[{a}]"),
                "at least 4 nodes per axis",
            ));
        }
    }

    let k = &config.kinetics;
    for (name, v) in [("kinetics.e_A", k.e_a), ("kinetics.e_C", k.e_c)] {
        if !v.is_finite() {
            return Err(invalid(name, "must be finite"));
        }
    }
    for (name, v) in [("kinetics.K_A", k.k_a), ("kinetics.K_C", k.k_c)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid(name, "must be finite and non-negative"));
        }
    }

    let s = &config.solver;
    if !(s.relaxation_factor > 0.0 && s.relaxation_factor < 2.0) {
        return Err(invalid("solver.omega", "must lie in (0, 2)"));
    }
    if !(s.floating_damping > 0.0 && s.floating_damping <= 1.0) {
        return Err(invalid("solver.lambda", "must lie in (0, 1]"));
    }
    positive("solver.tolerance", s.tolerance)?;
    positive("solver.flux_tolerance", s.flux_tolerance)?;
    if s.max_sweeps < 1 {
        return Err(invalid("solver.max_sweeps", "at least one sweep"));
    }

    for (i, e) in config.electrodes.iter().enumerate() {
        if config.electrodes[..i].iter().any(|o| o.id == e.id) {
            return Err(ConfigError::DuplicateId { id: e.id.clone() });
        }
        let b = &e.region;
        if (0..3).any(|a| !(b.min[a].is_finite() && b.max[a].is_finite() && b.min[a] < b.max[a])) {
            return Err(ConfigError::DegenerateBox { id: e.id.clone() });
        }
        if (0..3).any(|a| b.min[a] <= 0.0 || b.max[a] >= config.cell_size[a]) {
            return Err(ConfigError::ElectrodeOutsideCell { id: e.id.clone() });
        }
        match (e.role, e.metallic_potential) {
            (Role::Bipolar, Some(_)) => {
                return Err(ConfigError::UnexpectedPotential { id: e.id.clone() })
            }
            (Role::Anode | Role::Cathode, None) => {
                return Err(ConfigError::MissingPotential {
                    id: e.id.clone(),
                    role: e.role.as_str(),
                })
            }
            (_, Some(v)) if !v.is_finite() => {
                return Err(invalid(
                    &format!("electrodes[{i}].potential"),
                    "must be finite",
                ))
            }
            _ => {}
        }
    }
    for (i, a) in config.electrodes.iter().enumerate() {
        for b in &config.electrodes[i + 1..] {
            if a.region.overlaps(&b.region) {
                return Err(ConfigError::OverlappingElectrodes {
                    first: a.id.clone(),
                    second: b.id.clone(),
                });
            }
        }
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cell() -> CellConfig {
        CellConfig {
            cell_size: [1.0, 1.0, 1.0],
            conductivity: 50.0,
            grid: GridSpec { dims: [11, 11, 11] },
            electrodes: vec![
                ElectrodeSpec::anode("A", BoxRegion::new([0.1, 0.1, 0.1], [0.15, 0.9, 0.9]), 1.0),
                ElectrodeSpec::cathode("C", BoxRegion::new([0.85, 0.1, 0.1], [0.9, 0.9, 0.9]), 0.0),
            ],
            kinetics: Kinetics::default(),
            solver: SolverParams::default(),
        }
    }

    #[test]
    fn two_plates_are_valid() {
        let cfg = unit_cell();
        assert_eq!(build_cell(cfg.clone()).unwrap(), cfg);
    }

    #[test]
    fn shared_volume_is_rejected() {
        let mut cfg = unit_cell();
        cfg.electrodes[1].region = BoxRegion::new([0.12, 0.2, 0.2], [0.5, 0.5, 0.5]);
        assert_eq!(
            build_cell(cfg),
            Err(ConfigError::OverlappingElectrodes {
                first: "A".into(),
                second: "C".into()
            })
        );
    }

    #[test]
    fn touching_the_wall_is_outside() {
        let mut cfg = unit_cell();
        cfg.electrodes[1].region.max[0] = 1.0;
        assert_eq!(
            build_cell(cfg),
            Err(ConfigError::ElectrodeOutsideCell { id: "C".into() })
        );
    }

    #[test]
    fn non_positive_fields_are_named() {
        let mut cfg = unit_cell();
        cfg.conductivity = 0.0;
        assert_eq!(
            build_cell(cfg),
            Err(ConfigError::NonPositive {
                field: "conductivity".into()
            })
        );
        let mut cfg = unit_cell();
        cfg.cell_size[2] = -1.0;
        assert!(matches!(
            build_cell(cfg),
            Err(ConfigError::NonPositive { field }) if field == "cell_size[2]"
        ));
    }

    #[test]
    fn potential_presence_follows_role() {
        let mut cfg = unit_cell();
        cfg.electrodes[0].metallic_potential = None;
        assert!(matches!(
            build_cell(cfg),
            Err(ConfigError::MissingPotential { .. })
        ));
        let mut cfg = unit_cell();
        cfg.electrodes.push(ElectrodeSpec {
            metallic_potential: Some(0.5),
            ..ElectrodeSpec::bipolar("B", BoxRegion::new([0.4, 0.2, 0.2], [0.5, 0.8, 0.8]))
        });
        assert!(matches!(
            build_cell(cfg),
            Err(ConfigError::UnexpectedPotential { .. })
        ));
    }

    #[test]
    fn solver_ranges() {
        let mut cfg = unit_cell();
        cfg.solver.relaxation_factor = 2.0;
        assert!(build_cell(cfg).is_err());
        let mut cfg = unit_cell();
        cfg.solver.floating_damping = 0.25;
        assert!(build_cell(cfg).is_ok());
        let mut cfg = unit_cell();
        cfg.kinetics.k_c = -1e-3;
        assert!(build_cell(cfg).is_err());
        let mut cfg = unit_cell();
        cfg.kinetics.k_a = 0.0;
        cfg.kinetics.k_c = 0.0;
        assert!(build_cell(cfg).is_ok());
    }
}
