use std::fs;

use ewcell_core::field::{extract_slice, normal_current_map, Quantity};
use ewcell_core::io::bundle::{read_manifest, MANIFEST};
use ewcell_core::io::{
    config_to_json, deposit_to_csv, parse_cell_config, parse_csv_matrix, read_result_bundle,
    slice_to_csv, streamlines_from_json, streamlines_to_json, write_result_bundle, BundleError,
};
use ewcell_core::model::{Axis, BoxRegion, CellConfig, ElectrodeSpec, GridSpec, SolverParams};
use ewcell_core::presets::COPPER;
use ewcell_core::trace::{trace_all, TraceParams};
use ewcell_core::{solve_cell, ResultBundle, RunOptions};

fn small_cell() -> CellConfig {
    CellConfig {
        cell_size: [1.0, 1.0, 1.0],
        conductivity: 40.0,
        grid: GridSpec { dims: [11, 11, 11] },
        electrodes: vec![
            ElectrodeSpec::anode(
                "A",
                BoxRegion::new([0.1, 0.001, 0.001], [0.3, 0.999, 0.999]),
                4.0,
            ),
            ElectrodeSpec::bipolar("B", BoxRegion::new([0.4, 0.3, 0.2], [0.6, 0.7, 0.8])),
            ElectrodeSpec::cathode(
                "C",
                BoxRegion::new([0.7, 0.001, 0.001], [0.9, 0.999, 0.999]),
                0.0,
            ),
        ],
        kinetics: COPPER,
        solver: SolverParams {
            tolerance: 1e-9,
            ..SolverParams::default()
        },
    }
}

fn solved() -> ResultBundle {
    solve_cell(&small_cell(), RunOptions::default(), &mut |_| {}).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn bundle_round_trip_is_bit_exact() {
    let b = solved();
    assert!(b.report.converged);
    let dir = tempfile::tempdir().unwrap();
    let digest = write_result_bundle(dir.path(), &b).unwrap();
    assert_eq!(digest.len(), 64);
    let back = read_result_bundle(dir.path()).unwrap();
    assert_eq!(bits(&back.fields.potential), bits(&b.fields.potential));
    assert_eq!(bits(&back.fields.magnitude), bits(&b.fields.magnitude));
    assert_eq!(bits(&back.fields.metallic), bits(&b.fields.metallic));
    for (x, y) in back.fields.current.iter().zip(&b.fields.current) {
        assert_eq!(bits(x), bits(y));
    }
    assert_eq!(back.config, b.config);
    assert_eq!(back.grid, b.grid);
    assert_eq!(back.report, b.report);
    assert_eq!(back, b);

    let manifest = read_manifest(dir.path()).unwrap();
    assert_eq!(manifest.geometry.electrodes.len(), 3);
    assert_eq!(
        manifest.geometry.electrodes[1].face_count,
        b.grid.faces_of(1).len()
    );
    assert_eq!(manifest.metallic_potentials[1].id, "B");
    // Writing the same result again produces the same digest.
    let again = tempfile::tempdir().unwrap();
    assert_eq!(write_result_bundle(again.path(), &b).unwrap(), digest);
}

#[test]
fn truncated_arrays_are_detected() {
    let b = solved();
    let dir = tempfile::tempdir().unwrap();
    write_result_bundle(dir.path(), &b).unwrap();
    let path = dir.path().join("Jy.f64");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    match read_result_bundle(dir.path()) {
        Err(BundleError::CorruptArray {
            name,
            expected,
            actual,
        }) => {
            assert_eq!(name, "Jy");
            assert_eq!(expected, 1331);
            assert_eq!(actual, 1330);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn modified_arrays_are_detected() {
    let b = solved();
    let dir = tempfile::tempdir().unwrap();
    write_result_bundle(dir.path(), &b).unwrap();
    let path = dir.path().join("V.f64");
    let mut bytes = fs::read(&path).unwrap();
    bytes[100] ^= 1;
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        read_result_bundle(dir.path()),
        Err(BundleError::DigestMismatch { name }) if name == "V"
    ));
}

#[test]
fn edited_manifests_are_detected() {
    let b = solved();
    let dir = tempfile::tempdir().unwrap();
    write_result_bundle(dir.path(), &b).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(
        &path,
        text.replacen("\"conductivity\": 40.0", "\"conductivity\": 41.0", 1),
    )
    .unwrap();
    assert!(matches!(
        read_result_bundle(dir.path()),
        Err(BundleError::ManifestTampered)
    ));
}

#[test]
fn other_versions_are_refused() {
    let b = solved();
    let dir = tempfile::tempdir().unwrap();
    write_result_bundle(dir.path(), &b).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("\"version\": 1", "\"version\": 2", 1)).unwrap();
    assert!(matches!(
        read_result_bundle(dir.path()),
        Err(BundleError::VersionMismatch { version: 2, .. })
    ));
}

#[test]
fn missing_bundles_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        read_result_bundle(&dir.path().join("absent")),
        Err(BundleError::Io { .. })
    ));
}

#[test]
fn config_round_trip() {
    let cfg = small_cell();
    let text = config_to_json(&cfg);
    assert_eq!(parse_cell_config(&text).unwrap(), cfg);
    let again = config_to_json(&parse_cell_config(&text).unwrap());
    assert_eq!(again, text);
}

#[test]
fn example_config_parses() {
    let text = include_str!("../../../configs/two_plate.json");
    let cfg = parse_cell_config(text).unwrap();
    assert_eq!(cfg.electrodes.len(), 2);
    ewcell_core::grid::discretize(&cfg).unwrap();
    let text = include_str!("../../../configs/bipolar.json");
    assert_eq!(parse_cell_config(text).unwrap().electrodes.len(), 3);
}

#[test]
fn streamline_json_round_trip() {
    let b = solved();
    let set = trace_all(
        &b.grid,
        &b.fields,
        &["A", "B"],
        &TraceParams::for_grid(&b.grid),
    )
    .unwrap();
    assert!(set.line_count() > 0);
    let text = streamlines_to_json(&set);
    assert_eq!(streamlines_from_json(&text).unwrap(), set);
    let raw: serde_json::Value = serde_json::from_str(&text).unwrap();
    let first = &raw["groups"][0]["lines"][0];
    let n = first["V"].as_array().unwrap().len();
    assert_eq!(first["vertices"].as_array().unwrap().len(), 3 * n);
}

#[test]
fn csv_exports_read_back_exactly() {
    let b = solved();
    let img = extract_slice(&b.grid, &b.fields, Axis::Y, 0.5, Quantity::Potential).unwrap();
    let rows = parse_csv_matrix(&slice_to_csv(&img)).unwrap();
    assert_eq!(rows.len(), img.rows);
    for (r, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), img.cols);
        for (c, v) in row.iter().enumerate() {
            assert_eq!(v.to_bits(), img.at(r, c).to_bits());
        }
    }

    let map = normal_current_map(&b.grid, &b.fields, "B").unwrap();
    let csv = deposit_to_csv(&map);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("face,x,y,z,nx,ny,nz,area,normal_current,polarity")
    );
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), map.faces.len());
    for (line, f) in body.iter().zip(&map.faces) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0].parse::<usize>().unwrap(), f.face);
        assert_eq!(cols[8].parse::<f64>().unwrap(), f.normal_current);
        assert_eq!(cols[9] == "cathodic", f.receives_deposit());
    }
}
