//! Reference cells used by the test suites, the benchmarks and the README.

use crate::model::{BoxRegion, CellConfig, ElectrodeSpec, GridSpec, Kinetics, SolverParams};

/// Copper electrowinning rest potentials: 0.89 V between an anode and a
/// cathode before any current flows.
pub const COPPER: Kinetics = Kinetics {
    e_a: -1.23,
    e_c: 0.34,
    k_a: 1e-3,
    k_c: 1e-3,
};

/// Length between the facing surfaces of the outermost anode and cathode
/// in [`two_plate`] and [`bipolar_series`].
pub const GAP: f64 = 0.8;

/// Plates flush with the x walls and filling the 0.4 × 0.4 m cross section,
/// their facing surfaces [`GAP`] apart with `gap_cells` grid cells between
/// them. Each plate is two cells thick, so the cell has `gap_cells + 5`
/// nodes along x.
pub fn two_plate(
    gap_cells: usize,
    transverse_dims: usize,
    voltage: f64,
    kinetics: Kinetics,
) -> CellConfig {
    let h = GAP / gap_cells as f64;
    let n = gap_cells + 4;
    let length = n as f64 * h;
    CellConfig {
        cell_size: [length, 0.4, 0.4],
        conductivity: 50.0,
        grid: GridSpec {
            dims: [n + 1, transverse_dims, transverse_dims],
        },
        electrodes: vec![
            ElectrodeSpec::anode("anode", full_face(0.3 * h, 2.0 * h), voltage),
            ElectrodeSpec::cathode(
                "cathode",
                full_face((n - 2) as f64 * h, length - 0.3 * h),
                0.0,
            ),
        ],
        kinetics,
        solver: SolverParams::default(),
    }
}

fn full_face(x0: f64, x1: f64) -> BoxRegion {
    BoxRegion::new([x0, 0.001, 0.001], [x1, 0.399, 0.399])
}

/// [`two_plate`] with a full-face floating plate filling the middle quarter
/// of the gap, leaving two gaps of `3/8 GAP` each. `gap_cells` must be a
/// multiple of 8.
pub fn bipolar_series(
    gap_cells: usize,
    transverse_dims: usize,
    voltage: f64,
    kinetics: Kinetics,
) -> CellConfig {
    assert!(gap_cells.is_multiple_of(8), "gap_cells must be a multiple of 8");
    let h = GAP / gap_cells as f64;
    let start = 2 + 3 * gap_cells / 8;
    let end = start + gap_cells / 4;
    let mut cfg = two_plate(gap_cells, transverse_dims, voltage, kinetics);
    cfg.electrodes.insert(
        1,
        ElectrodeSpec::bipolar("bipolar", full_face(start as f64 * h, end as f64 * h)),
    );
    cfg
}

/// Anode, cathode and a floating plate that covers only part of the cross
/// section, so some current passes around it.
pub fn partial_bipolar(dims: [usize; 3], voltage: f64, kinetics: Kinetics) -> CellConfig {
    CellConfig {
        cell_size: [1.2, 0.6, 0.6],
        conductivity: 50.0,
        grid: GridSpec { dims },
        electrodes: vec![
            ElectrodeSpec::anode(
                "anode",
                BoxRegion::new([0.05, 0.001, 0.001], [0.15, 0.599, 0.599]),
                voltage,
            ),
            ElectrodeSpec::bipolar(
                "bipolar",
                BoxRegion::new([0.55, 0.15, 0.15], [0.65, 0.45, 0.45]),
            ),
            ElectrodeSpec::cathode(
                "cathode",
                BoxRegion::new([1.05, 0.001, 0.001], [1.15, 0.599, 0.599]),
                0.0,
            ),
        ],
        kinetics,
        solver: SolverParams::default(),
    }
}

/// Asymmetric cell with four floating plates between a full-face anode and
/// cathode, 1.5 × 1 × 1 m on a 49 × 33 × 33 grid.
pub fn four_bipolar(voltage: f64, kinetics: Kinetics) -> CellConfig {
    let b = |id: &str, min: [f64; 3], max: [f64; 3]| {
        ElectrodeSpec::bipolar(id, BoxRegion::new(min, max))
    };
    CellConfig {
        cell_size: [1.5, 1.0, 1.0],
        conductivity: 50.0,
        grid: GridSpec { dims: [49, 33, 33] },
        electrodes: vec![
            ElectrodeSpec::anode(
                "anode",
                BoxRegion::new([0.05, 0.001, 0.001], [0.15, 0.999, 0.999]),
                voltage,
            ),
            b("B1", [0.4, 0.1, 0.1], [0.5, 0.6, 0.9]),
            b("B2", [0.7, 0.4, 0.2], [0.8, 0.9, 0.7]),
            b("B3", [1.0, 0.15, 0.3], [1.1, 0.55, 0.95]),
            b("B4", [1.0, 0.65, 0.05], [1.1, 0.95, 0.5]),
            ElectrodeSpec::cathode(
                "cathode",
                BoxRegion::new([1.35, 0.001, 0.001], [1.45, 0.999, 0.999]),
                0.0,
            ),
        ],
        kinetics,
        solver: SolverParams::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::discretize;
    use crate::model::build_cell;

    #[test]
    fn presets_are_valid() {
        for cfg in [
            two_plate(16, 5, 1.0, Kinetics::IDEAL),
            two_plate(64, 5, 1.0, COPPER),
            bipolar_series(32, 5, 5.0, COPPER),
            partial_bipolar([25, 13, 13], 5.0, COPPER),
            four_bipolar(10.0, COPPER),
        ] {
            let cfg = build_cell(cfg).unwrap();
            discretize(&cfg).unwrap();
        }
    }

    #[test]
    fn plates_fill_the_cross_section() {
        let grid = discretize(&two_plate(28, 5, 1.0, Kinetics::IDEAL)).unwrap();
        assert_eq!(grid.dims[0], 33);
        let a = &grid.electrodes[0];
        let c = &grid.electrodes[1];
        assert_eq!((a.lo, a.hi), ([0, 0, 0], [2, 4, 4]));
        assert_eq!((c.lo, c.hi), ([30, 0, 0], [32, 4, 4]));
        assert!((c.snapped.min[0] - a.snapped.max[0] - GAP).abs() < 1e-12);
        assert!(grid
            .faces
            .iter()
            .all(|f| f.normal.axis == crate::model::Axis::X));
        let grid = discretize(&bipolar_series(16, 5, 1.0, Kinetics::IDEAL)).unwrap();
        let b = &grid.electrodes[1];
        assert_eq!((b.lo[0], b.hi[0]), (8, 12));
    }
}
