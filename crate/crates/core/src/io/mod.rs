//! File formats: configuration JSON, result bundles, streamline JSON and
//! the CSV exports of slices and deposit maps.

pub mod bundle;
pub mod config;

use std::fmt::Write;

use crate::field::{DepositMap, SliceImage};
use crate::trace::StreamlineSet;

pub use bundle::{read_result_bundle, write_result_bundle, BundleError, Geometry, ResultBundle};
pub use config::{config_to_json, parse_cell_config, ConfigParseError};

/// Shortest form that reads back to the same `f64`: 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn streamlines_to_json(set: &StreamlineSet) -> String {
    serde_json::to_string(set).expect("streamlines serialize")
}

pub fn streamlines_from_json(text: &str) -> Result<StreamlineSet, serde_json::Error> {
    serde_json::from_str(text)
}

/// One CSV line per slice row, columns along the slice's column axis.
pub fn slice_to_csv(image: &SliceImage) -> String {
    let mut out = String::new();
    for r in 0..image.rows {
        let row: Vec<String> = (0..image.cols)
            .map(|c| format_f64(image.at(r, c)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn deposit_to_csv(map: &DepositMap) -> String {
    let mut out = String::from("face,x,y,z,nx,ny,nz,area,normal_current,polarity\n");
    for f in &map.faces {
        let polarity = match f.polarity {
            crate::solver::Polarity::Anodic => "anodic",
            crate::solver::Polarity::Cathodic => "cathodic",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            f.face,
            format_f64(f.position[0]),
            format_f64(f.position[1]),
            format_f64(f.position[2]),
            f.normal[0],
            f.normal[1],
            f.normal[2],
            format_f64(f.area),
            format_f64(f.normal_current),
            polarity
        );
    }
    out
}

/// Parses a CSV matrix written by [`slice_to_csv`].
pub fn parse_csv_matrix(text: &str) -> Result<Vec<Vec<f64>>, std::num::ParseFloatError> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::parse).collect())
        .collect()
}
