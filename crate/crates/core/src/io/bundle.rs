//! Persisted solve results.
//!
//! A bundle is a directory holding `manifest.json`, its SHA-256 in
//! `manifest.sha256`, and one file of little-endian `f64` values per field
//! array (`V.f64`, `Jx.f64`, `Jy.f64`, `Jz.f64`, `Jmag.f64`), x fastest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::FieldSet;
use crate::grid::{discretize, Grid, GridError};
use crate::model::{BoxRegion, CellConfig, Role, Vec3};
use crate::solver::ConvergenceReport;

pub const FORMAT: &str = "ewcell-result";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_DIGEST: &str = "manifest.sha256";
pub const ARRAY_NAMES: [&str; 5] = ["V", "Jx", "Jy", "Jz", "Jmag"];

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("unsupported bundle format {format} version {version} (expected {FORMAT} version {VERSION})")]
    VersionMismatch { format: String, version: u32 },
    #[error("array `{name}` holds {actual} values, expected {expected}")]
    CorruptArray {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("array `{name}` does not match its recorded digest")]
    DigestMismatch { name: String },
    #[error("manifest does not match its recorded digest")]
    ManifestTampered,
    #[error("bundle grid does not match its configuration: {0}")]
    Grid(#[from] GridError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One electrode as it was discretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeGeometry {
    pub id: String,
    pub role: Role,
    pub requested: BoxRegion,
    pub snapped: BoxRegion,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub node_count: usize,
    pub face_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub cell_size: Vec3,
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub electrodes: Vec<ElectrodeGeometry>,
}

impl Geometry {
    pub fn of(grid: &Grid) -> Self {
        Self {
            cell_size: grid.size,
            dims: grid.dims,
            spacing: grid.spacing,
            electrodes: grid
                .electrodes
                .iter()
                .enumerate()
                .map(|(i, e)| ElectrodeGeometry {
                    id: e.id.clone(),
                    role: e.role,
                    requested: e.requested,
                    snapped: e.snapped,
                    lo: e.lo,
                    hi: e.hi,
                    node_count: e.node_count,
                    face_count: grid.face_range(i).len(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetallicPotential {
    pub id: String,
    pub potential: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayRecord {
    pub name: String,
    pub file: String,
    pub len: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: CellConfig,
    pub geometry: Geometry,
    pub metallic_potentials: Vec<MetallicPotential>,
    pub report: ConvergenceReport,
    pub arrays: Vec<ArrayRecord>,
}

/// Everything a solve produces, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub config: CellConfig,
    pub grid: Grid,
    pub fields: FieldSet,
    pub report: ConvergenceReport,
}

fn array_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn arrays_of(fields: &FieldSet) -> [(&'static str, Vec<u8>); 5] {
    [
        ("V", array_bytes(fields.potential.iter().copied())),
        ("Jx", array_bytes(fields.current.iter().map(|j| j[0]))),
        ("Jy", array_bytes(fields.current.iter().map(|j| j[1]))),
        ("Jz", array_bytes(fields.current.iter().map(|j| j[2]))),
        ("Jmag", array_bytes(fields.magnitude.iter().copied())),
    ]
}

/// Writes the bundle into `dir` (created if needed) and returns the
/// manifest digest.
pub fn write_result_bundle(dir: &Path, bundle: &ResultBundle) -> Result<String, BundleError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut records = Vec::new();
    for (name, bytes) in arrays_of(&bundle.fields) {
        let file = format!("{name}.f64");
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        records.push(ArrayRecord {
            name: name.to_string(),
            file,
            len: bytes.len() / 8,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        version: VERSION,
        config: bundle.config.clone(),
        geometry: Geometry::of(&bundle.grid),
        metallic_potentials: bundle
            .grid
            .electrodes
            .iter()
            .zip(&bundle.fields.metallic)
            .map(|(e, &v)| MetallicPotential {
                id: e.id.clone(),
                potential: v,
            })
            .collect(),
        report: bundle.report.clone(),
        arrays: records,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| BundleError::Manifest(e.to_string()))?;
    let digest = sha256_hex(text.as_bytes());
    let path = dir.join(MANIFEST);
    fs::write(&path, &text).map_err(io_err(&path))?;
    let path = dir.join(MANIFEST_DIGEST);
    fs::write(&path, format!("{digest}\n")).map_err(io_err(&path))?;
    Ok(digest)
}

/// Reads only the manifest, checking its version and digest.
pub fn read_manifest(dir: &Path) -> Result<Manifest, BundleError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| BundleError::Manifest(e.to_string()))?;
    let format = raw
        .get("format")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if format != FORMAT || version != VERSION {
        return Err(BundleError::VersionMismatch { format, version });
    }
    let path = dir.join(MANIFEST_DIGEST);
    let recorded = fs::read_to_string(&path).map_err(io_err(&path))?;
    if recorded.trim() != sha256_hex(text.as_bytes()) {
        return Err(BundleError::ManifestTampered);
    }
    serde_json::from_value(raw).map_err(|e| BundleError::Manifest(e.to_string()))
}

fn read_array(dir: &Path, record: &ArrayRecord, expected: usize) -> Result<Vec<f64>, BundleError> {
    let path = dir.join(&record.file);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != expected || record.len != expected {
        return Err(BundleError::CorruptArray {
            name: record.name.clone(),
            expected,
            actual: bytes.len() / 8,
        });
    }
    if sha256_hex(&bytes) != record.sha256 {
        return Err(BundleError::DigestMismatch {
            name: record.name.clone(),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Loads a bundle, rebuilding the grid from the configuration echo.
pub fn read_result_bundle(dir: &Path) -> Result<ResultBundle, BundleError> {
    let manifest = read_manifest(dir)?;
    let grid = discretize(&manifest.config)?;
    if manifest.geometry.dims != grid.dims {
        return Err(BundleError::Manifest(format!(
            "manifest dims {:?} differ from configured dims {:?}",
            manifest.geometry.dims, grid.dims
        )));
    }
    let n = grid.len();
    let mut arrays = Vec::with_capacity(ARRAY_NAMES.len());
    for name in ARRAY_NAMES {
        let record = manifest
            .arrays
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| BundleError::Manifest(format!("array `{name}` is not listed")))?;
        arrays.push(read_array(dir, record, n)?);
    }
    let magnitude = arrays.pop().expect("five arrays");
    let jz = arrays.pop().expect("five arrays");
    let jy = arrays.pop().expect("five arrays");
    let jx = arrays.pop().expect("five arrays");
    let potential = arrays.pop().expect("five arrays");
    let current = (0..n).map(|i| [jx[i], jy[i], jz[i]]).collect();
    let metallic = grid
        .electrodes
        .iter()
        .map(|e| {
            manifest
                .metallic_potentials
                .iter()
                .find(|m| m.id == e.id)
                .map(|m| m.potential)
                .ok_or_else(|| {
                    BundleError::Manifest(format!("no metallic potential for `{}`", e.id))
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ResultBundle {
        config: manifest.config,
        grid,
        fields: FieldSet {
            potential,
            current,
            magnitude,
            metallic,
        },
        report: manifest.report,
    })
}
