//! Node-centred discretization of a cell.
//!
//! Nodes sit at `i * h` along each axis, `h = cell_size / (dims - 1)`, with
//! `i = 0` and `i = dims - 1` lying on the dielectric walls. Electrode boxes
//! are snapped to the nearest node planes. Nodes strictly inside a snapped
//! box carry the electrode's metallic potential; nodes on its surface planes
//! are electrolyte nodes sitting on the electrolyte side of the double layer.
//! Where a snapped box surface coincides with a wall there is no electrolyte
//! beyond it, so those surface nodes belong to the electrode.
//!
//! An [`InterfaceFace`] pairs an electrode node with the adjacent surface
//! node. Surface nodes on box edges and corners have no axis-aligned
//! electrode neighbour and are ordinary electrolyte nodes.

use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Axis, BoxRegion, CellConfig, Role, Vec3};

/// Outward unit normal of a face, always one of the six axis directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Direction {
    pub axis: Axis,
    pub positive: bool,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction {
            axis: Axis::X,
            positive: false,
        },
        Direction {
            axis: Axis::X,
            positive: true,
        },
        Direction {
            axis: Axis::Y,
            positive: false,
        },
        Direction {
            axis: Axis::Y,
            positive: true,
        },
        Direction {
            axis: Axis::Z,
            positive: false,
        },
        Direction {
            axis: Axis::Z,
            positive: true,
        },
    ];

    pub fn sign(self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }

    pub fn unit(self) -> Vec3 {
        let mut v = [0.0; 3];
        v[self.axis.index()] = self.sign();
        v
    }

    pub fn label(self) -> &'static str {
        match (self.axis, self.positive) {
            (Axis::X, false) => "-x",
            (Axis::X, true) => "+x",
            (Axis::Y, false) => "-y",
            (Axis::Y, true) => "+y",
            (Axis::Z, false) => "-z",
            (Axis::Z, true) => "+z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Electrolyte node away from the walls.
    Electrolyte,
    /// Electrolyte node on at least one dielectric wall.
    Wall,
    /// Node inside electrode `n` (index into [`Grid::electrodes`]).
    Electrode(usize),
}

impl NodeClass {
    pub fn is_electrolyte(self) -> bool {
        !matches!(self, NodeClass::Electrode(_))
    }
}

/// Electrolyte-side conductance from an interface node to a neighbour.
///
/// `conductance` is geometric (area / distance, in metres); multiply by the
/// electrolyte conductivity to get siemens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub node: usize,
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceFace {
    pub electrode: usize,
    pub electrode_node: usize,
    pub electrolyte_node: usize,
    /// Next electrolyte node along the normal, one step further out. Absent
    /// when the interface node lies on a wall opposite the electrode.
    pub outward_node: Option<usize>,
    pub normal: Direction,
    /// Face area ΔS in m².
    pub area: f64,
    /// Every electrolyte link leaving the interface node. Face interiors have
    /// exactly one (to `outward_node`); faces on the rim of a box side also
    /// couple laterally to the edge nodes.
    pub links: Vec<Link>,
}

impl InterfaceFace {
    pub fn total_conductance(&self) -> f64 {
        self.links.iter().map(|l| l.conductance).sum()
    }
}

/// An electrode as it appears on the grid after snapping.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveElectrode {
    pub id: String,
    pub role: Role,
    pub requested: BoxRegion,
    pub snapped: BoxRegion,
    /// Inclusive node index range of the snapped box.
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub fixed_potential: Option<f64>,
    pub node_count: usize,
}

impl EffectiveElectrode {
    pub fn is_floating(&self) -> bool {
        self.role == Role::Bipolar
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("electrode `{id}` is thinner than two grid cells after snapping; refine the grid")]
    ResolutionTooCoarse { id: String },
    #[error("electrodes `{first}` and `{second}` share surface nodes after snapping")]
    ElectrodesTooClose { first: String, second: String },
    #[error("unknown electrode `{id}`")]
    UnknownElectrode { id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub size: Vec3,
    /// Electrolyte conductivity σ in S/m.
    pub conductivity: f64,
    pub classes: Vec<NodeClass>,
    pub electrodes: Vec<EffectiveElectrode>,
    pub faces: Vec<InterfaceFace>,
    face_ranges: Vec<Range<usize>>,
    face_at_node: Vec<Option<usize>>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn node_position(&self, idx: usize) -> Vec3 {
        let c = self.coords(idx);
        [
            c[0] as f64 * self.spacing[0],
            c[1] as f64 * self.spacing[1],
            c[2] as f64 * self.spacing[2],
        ]
    }

    /// Neighbour one step along `dir`, or `None` past a wall.
    #[inline]
    pub fn neighbor(&self, idx: usize, dir: Direction) -> Option<usize> {
        let mut c = self.coords(idx);
        let a = dir.axis.index();
        if dir.positive {
            if c[a] + 1 >= self.dims[a] {
                return None;
            }
            c[a] += 1;
        } else {
            if c[a] == 0 {
                return None;
            }
            c[a] -= 1;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// Width of the dual cell of node coordinate `i` along axis `a`; halved on walls.
    #[inline]
    pub fn dual_width(&self, a: usize, i: usize) -> f64 {
        if i == 0 || i + 1 == self.dims[a] {
            0.5 * self.spacing[a]
        } else {
            self.spacing[a]
        }
    }

    /// Geometric conductance (dual-face area / spacing) of the link from
    /// `idx` along `axis`.
    pub fn link_conductance(&self, idx: usize, axis: Axis) -> f64 {
        let c = self.coords(idx);
        let a = axis.index();
        let (b, d) = axis.others();
        self.dual_width(b.index(), c[b.index()]) * self.dual_width(d.index(), c[d.index()])
            / self.spacing[a]
    }

    /// Dual-face area normal to `axis` at node `idx`.
    pub fn face_area(&self, idx: usize, axis: Axis) -> f64 {
        let c = self.coords(idx);
        let (b, d) = axis.others();
        self.dual_width(b.index(), c[b.index()]) * self.dual_width(d.index(), c[d.index()])
    }

    pub fn electrode_index(&self, id: &str) -> Result<usize, GridError> {
        self.electrodes
            .iter()
            .position(|e| e.id == id)
            .ok_or_else(|| GridError::UnknownElectrode { id: id.to_string() })
    }

    pub fn faces_of(&self, electrode: usize) -> &[InterfaceFace] {
        &self.faces[self.face_ranges[electrode].clone()]
    }

    pub fn face_range(&self, electrode: usize) -> Range<usize> {
        self.face_ranges[electrode].clone()
    }

    /// Face whose electrolyte node is `idx`, if any.
    pub fn face_at(&self, idx: usize) -> Option<usize> {
        self.face_at_node[idx]
    }

    /// Electrode region containing `p`, using the same wall rule as the
    /// node classification: box surfaces belong to the electrolyte except
    /// where they coincide with a wall.
    pub fn electrode_at(&self, p: Vec3) -> Option<usize> {
        // Compare in lattice units so that points on node planes classify
        // exactly like the nodes themselves.
        let s: [f64; 3] = std::array::from_fn(|a| {
            let s = p[a] / self.spacing[a];
            let r = s.round();
            if (s - r).abs() < 1e-9 {
                r
            } else {
                s
            }
        });
        self.electrodes.iter().position(|e| {
            (0..3).all(|a| {
                let (lo, hi) = (e.lo[a] as f64, e.hi[a] as f64);
                let lo_ok = if e.lo[a] == 0 { s[a] >= 0.0 } else { s[a] > lo };
                let hi_ok = if e.hi[a] + 1 == self.dims[a] {
                    s[a] <= hi
                } else {
                    s[a] < hi
                };
                lo_ok && hi_ok
            })
        })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= self.size[a])
    }

    pub fn electrolyte_node_count(&self) -> usize {
        self.classes.iter().filter(|c| c.is_electrolyte()).count()
    }
}

fn on_electrode(lo: usize, hi: usize, n: usize, i: usize) -> bool {
    (lo < i && i < hi) || (i == lo && lo == 0) || (i == hi && hi + 1 == n)
}

/// Builds the classified grid of a validated configuration.
pub fn discretize(config: &CellConfig) -> Result<Grid, GridError> {
    let dims = config.grid.dims;
    let size = config.cell_size;
    let spacing = [
        size[0] / (dims[0] - 1) as f64,
        size[1] / (dims[1] - 1) as f64,
        size[2] / (dims[2] - 1) as f64,
    ];
    let snap = |a: usize, x: f64| -> usize {
        ((x / spacing[a]).round().max(0.0) as usize).min(dims[a] - 1)
    };

    let mut electrodes = Vec::with_capacity(config.electrodes.len());
    for spec in &config.electrodes {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            lo[a] = snap(a, spec.region.min[a]);
            hi[a] = snap(a, spec.region.max[a]);
            if hi[a] < lo[a] + 2 {
                return Err(GridError::ResolutionTooCoarse {
                    id: spec.id.clone(),
                });
            }
        }
        let snapped = BoxRegion::new(
            [
                lo[0] as f64 * spacing[0],
                lo[1] as f64 * spacing[1],
                lo[2] as f64 * spacing[2],
            ],
            [
                hi[0] as f64 * spacing[0],
                hi[1] as f64 * spacing[1],
                hi[2] as f64 * spacing[2],
            ],
        );
        electrodes.push(EffectiveElectrode {
            id: spec.id.clone(),
            role: spec.role,
            requested: spec.region,
            snapped,
            lo,
            hi,
            fixed_potential: spec.metallic_potential,
            node_count: 0,
        });
    }

    let total = dims[0] * dims[1] * dims[2];
    let mut classes = vec![NodeClass::Electrolyte; total];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let idx = i + dims[0] * (j + dims[1] * k);
                let c = [i, j, k];
                let on_wall = (0..3).any(|a| c[a] == 0 || c[a] + 1 == dims[a]);
                if on_wall {
                    classes[idx] = NodeClass::Wall;
                }
                for (e, el) in electrodes.iter_mut().enumerate() {
                    if (0..3).all(|a| on_electrode(el.lo[a], el.hi[a], dims[a], c[a])) {
                        if let NodeClass::Electrode(other) = classes[idx] {
                            return Err(GridError::ElectrodesTooClose {
                                first: config.electrodes[other].id.clone(),
                                second: el.id.clone(),
                            });
                        }
                        classes[idx] = NodeClass::Electrode(e);
                        el.node_count += 1;
                    }
                }
            }
        }
    }

    let mut grid = Grid {
        dims,
        spacing,
        size,
        conductivity: config.conductivity,
        classes,
        electrodes,
        faces: Vec::new(),
        face_ranges: Vec::new(),
        face_at_node: vec![None; total],
    };

    // Interface nodes: electrolyte nodes with an electrode neighbour.
    let mut owner: Vec<Option<(usize, usize, Direction)>> = vec![None; total];
    for idx in 0..total {
        if !grid.classes[idx].is_electrolyte() {
            continue;
        }
        for dir in Direction::ALL {
            // The electrode lies opposite the outward normal.
            let inward = Direction {
                axis: dir.axis,
                positive: !dir.positive,
            };
            let Some(nb) = grid.neighbor(idx, inward) else {
                continue;
            };
            if let NodeClass::Electrode(e) = grid.classes[nb] {
                if let Some((other, _, _)) = owner[idx] {
                    let (first, second) = (
                        grid.electrodes[other].id.clone(),
                        grid.electrodes[e].id.clone(),
                    );
                    return Err(GridError::ElectrodesTooClose { first, second });
                }
                owner[idx] = Some((e, nb, dir));
            }
        }
    }

    let mut faces = Vec::new();
    let mut face_ranges = Vec::with_capacity(grid.electrodes.len());
    for e in 0..grid.electrodes.len() {
        let start = faces.len();
        let mut mine: Vec<(Direction, usize, usize)> = owner
            .iter()
            .enumerate()
            .filter_map(|(idx, o)| match o {
                Some((oe, enode, dir)) if *oe == e => Some((*dir, idx, *enode)),
                _ => None,
            })
            .collect();
        mine.sort_by_key(|(dir, idx, _)| (*dir, *idx));
        for (normal, idx, enode) in mine {
            let outward_node = grid
                .neighbor(idx, normal)
                .filter(|&n| grid.classes[n].is_electrolyte());
            let mut links = Vec::new();
            for dir in Direction::ALL {
                let Some(nb) = grid.neighbor(idx, dir) else {
                    continue;
                };
                if !grid.classes[nb].is_electrolyte() {
                    continue;
                }
                if matches!(owner[nb], Some((oe, _, _)) if oe == e) {
                    continue;
                }
                links.push(Link {
                    node: nb,
                    conductance: grid.link_conductance(idx, dir.axis),
                });
            }
            grid.face_at_node[idx] = Some(faces.len());
            faces.push(InterfaceFace {
                electrode: e,
                electrode_node: enode,
                electrolyte_node: idx,
                outward_node,
                normal,
                area: grid.face_area(idx, normal.axis),
                links,
            });
        }
        face_ranges.push(start..faces.len());
    }
    grid.faces = faces;
    grid.face_ranges = face_ranges;
    Ok(grid)
}

/// Interface faces of one electrode, in the grid's deterministic order.
pub fn interface_faces<'g>(
    grid: &'g Grid,
    electrode_id: &str,
) -> Result<&'g [InterfaceFace], GridError> {
    let e = grid.electrode_index(electrode_id)?;
    Ok(grid.faces_of(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ElectrodeSpec, GridSpec, Kinetics, SolverParams};

    fn config(dims: [usize; 3], electrodes: Vec<ElectrodeSpec>) -> CellConfig {
        CellConfig {
            cell_size: [1.0, 1.0, 1.0],
            conductivity: 50.0,
            grid: GridSpec { dims },
            electrodes,
            kinetics: Kinetics::default(),
            solver: SolverParams::default(),
        }
    }

    fn bx(min: Vec3, max: Vec3) -> BoxRegion {
        BoxRegion::new(min, max)
    }

    /// Counts (electrode node, electrolyte neighbour) pairs by scanning
    /// every node and all six neighbours.
    fn brute_force_face_count(grid: &Grid, e: usize) -> usize {
        let d = grid.dims;
        let mut count = 0;
        for k in 0..d[2] as i64 {
            for j in 0..d[1] as i64 {
                for i in 0..d[0] as i64 {
                    let idx = grid.index(i as usize, j as usize, k as usize);
                    if grid.classes[idx] != NodeClass::Electrode(e) {
                        continue;
                    }
                    for (di, dj, dk) in [
                        (1, 0, 0),
                        (-1, 0, 0),
                        (0, 1, 0),
                        (0, -1, 0),
                        (0, 0, 1),
                        (0, 0, -1),
                    ] {
                        let (a, b, c) = (i + di, j + dj, k + dk);
                        if a < 0
                            || b < 0
                            || c < 0
                            || a >= d[0] as i64
                            || b >= d[1] as i64
                            || c >= d[2] as i64
                        {
                            continue;
                        }
                        let nb = grid.index(a as usize, b as usize, c as usize);
                        if grid.classes[nb].is_electrolyte() {
                            count += 1;
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn spacing_from_dims() {
        let grid = discretize(&config([11, 11, 11], vec![])).unwrap();
        for h in grid.spacing {
            assert!((h - 0.1).abs() < 1e-15);
        }
        assert_eq!(grid.len(), 1331);
    }

    #[test]
    fn one_cell_plate_is_too_coarse() {
        let cfg = config(
            [11, 11, 11],
            vec![ElectrodeSpec::anode(
                "A",
                bx([0.1, 0.2, 0.2], [0.2, 0.8, 0.8]),
                1.0,
            )],
        );
        assert_eq!(
            discretize(&cfg),
            Err(GridError::ResolutionTooCoarse { id: "A".into() })
        );
    }

    #[test]
    fn two_cell_plate_is_one_node_thick() {
        let cfg = config(
            [11, 11, 11],
            vec![ElectrodeSpec::anode(
                "A",
                bx([0.1, 0.2, 0.2], [0.3, 0.8, 0.8]),
                1.0,
            )],
        );
        let grid = discretize(&cfg).unwrap();
        let e = &grid.electrodes[0];
        assert_eq!((e.lo, e.hi), ([1, 2, 2], [3, 8, 8]));
        assert_eq!(e.node_count, 5 * 5);
        let faces = interface_faces(&grid, "A").unwrap();
        let minus_x = faces.iter().filter(|f| f.normal.label() == "-x").count();
        let plus_x = faces.iter().filter(|f| f.normal.label() == "+x").count();
        assert_eq!((minus_x, plus_x), (25, 25));
    }

    #[test]
    fn interior_two_cube_has_24_faces() {
        let cfg = config(
            [11, 11, 11],
            vec![ElectrodeSpec::bipolar(
                "B",
                bx([0.3, 0.3, 0.3], [0.6, 0.6, 0.6]),
            )],
        );
        let grid = discretize(&cfg).unwrap();
        assert_eq!(grid.electrodes[0].node_count, 8);
        assert_eq!(brute_force_face_count(&grid, 0), 24);
        assert_eq!(interface_faces(&grid, "B").unwrap().len(), 24);
    }

    #[test]
    fn face_count_matches_enumeration_on_boxes() {
        for (b, c, d) in [(1, 1, 1), (1, 2, 3), (3, 2, 1), (2, 4, 3), (4, 4, 4)] {
            let h = 0.05;
            let lo = [0.2, 0.25, 0.3];
            let hi = [
                lo[0] + (b + 1) as f64 * h,
                lo[1] + (c + 1) as f64 * h,
                lo[2] + (d + 1) as f64 * h,
            ];
            let cfg = config([21, 21, 21], vec![ElectrodeSpec::bipolar("B", bx(lo, hi))]);
            let grid = discretize(&cfg).unwrap();
            let expected = 2 * (b * c + c * d + d * b);
            assert_eq!(brute_force_face_count(&grid, 0), expected, "{b}x{c}x{d}");
            assert_eq!(grid.faces_of(0).len(), expected, "{b}x{c}x{d}");
        }
    }

    #[test]
    fn flush_side_contributes_no_faces() {
        // Snaps onto the y = 0 wall.
        let cfg = config(
            [11, 11, 11],
            vec![ElectrodeSpec::cathode(
                "C",
                bx([0.3, 0.02, 0.3], [0.6, 0.6, 0.6]),
                0.0,
            )],
        );
        let grid = discretize(&cfg).unwrap();
        let faces = interface_faces(&grid, "C").unwrap();
        assert!(faces.iter().all(|f| f.normal.label() != "-y"));
        assert_eq!(faces.len(), brute_force_face_count(&grid, 0));
        // Wall-lying faces use half the dual area in the wall axis.
        let f = faces
            .iter()
            .find(|f| f.normal.label() == "-x" && grid.coords(f.electrolyte_node)[1] == 0)
            .unwrap();
        assert!((f.area - 0.5 * 0.1 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn unknown_electrode() {
        let grid = discretize(&config([11, 11, 11], vec![])).unwrap();
        assert_eq!(
            interface_faces(&grid, "nope"),
            Err(GridError::UnknownElectrode { id: "nope".into() })
        );
    }

    #[test]
    fn close_electrodes_are_rejected() {
        let cfg = config(
            [11, 11, 11],
            vec![
                ElectrodeSpec::anode("A", bx([0.1, 0.2, 0.2], [0.3, 0.8, 0.8]), 1.0),
                ElectrodeSpec::bipolar("B", bx([0.31, 0.2, 0.2], [0.6, 0.8, 0.8])),
            ],
        );
        assert!(matches!(
            discretize(&cfg),
            Err(GridError::ElectrodesTooClose { .. })
        ));
    }

    #[test]
    fn partition_and_adjacency() {
        let cfg = config(
            [13, 11, 9],
            vec![
                ElectrodeSpec::anode("A", bx([0.05, 0.01, 0.01], [0.25, 0.99, 0.99]), 1.0),
                ElectrodeSpec::bipolar("B", bx([0.4, 0.2, 0.3], [0.6, 0.7, 0.8])),
                ElectrodeSpec::cathode("C", bx([0.75, 0.01, 0.01], [0.95, 0.99, 0.99]), 0.0),
            ],
        );
        let grid = discretize(&cfg).unwrap();
        let electrode_nodes: usize = grid.electrodes.iter().map(|e| e.node_count).sum();
        assert_eq!(electrode_nodes + grid.electrolyte_node_count(), grid.len());
        for f in &grid.faces {
            assert_eq!(
                grid.neighbor(f.electrode_node, f.normal),
                Some(f.electrolyte_node)
            );
            assert_eq!(
                grid.classes[f.electrode_node],
                NodeClass::Electrode(f.electrode)
            );
            assert!(grid.classes[f.electrolyte_node].is_electrolyte());
            let n = f.normal.unit();
            assert_eq!(n.iter().map(|c| c * c).sum::<f64>(), 1.0);
            let out = f.outward_node.unwrap();
            assert!(f.links.iter().any(|l| l.node == out));
        }
        assert_eq!(discretize(&cfg).unwrap(), grid);
    }

    #[test]
    fn region_lookup_follows_the_wall_rule() {
        let cfg = config(
            [11, 11, 11],
            vec![ElectrodeSpec::anode(
                "A",
                bx([0.02, 0.3, 0.3], [0.3, 0.7, 0.7]),
                1.0,
            )],
        );
        let grid = discretize(&cfg).unwrap();
        assert_eq!(grid.electrode_at([0.0, 0.5, 0.5]), Some(0));
        assert_eq!(grid.electrode_at([0.15, 0.5, 0.5]), Some(0));
        assert_eq!(grid.electrode_at([0.3, 0.5, 0.5]), None);
        assert_eq!(grid.electrode_at([0.15, 0.3, 0.5]), None);
        for idx in 0..grid.len() {
            let inside = grid.electrode_at(grid.node_position(idx)).is_some();
            assert_eq!(inside, !grid.classes[idx].is_electrolyte());
        }
    }
}
