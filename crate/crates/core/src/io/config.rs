//! The JSON cell configuration format.
//!
//! ```json
//! {
//!   "cell_size": [1.0, 1.0, 1.0],
//!   "conductivity": 50.0,
//!   "grid": { "dims": [33, 33, 33] },
//!   "electrodes": [
//!     { "id": "A", "role": "anode", "box": { "min": [0.1, 0.001, 0.001], "max": [0.2, 0.999, 0.999] }, "potential": 1.0 },
//!     { "id": "C", "role": "cathode", "box": { "min": [0.8, 0.001, 0.001], "max": [0.9, 0.999, 0.999] }, "potential": 0.0 }
//!   ],
//!   "kinetics": { "e_A": 0.2, "e_C": 0.34, "K_A": 0.001, "K_C": 0.001 },
//!   "solver": { "omega": 1.8, "lambda": 1.0, "tolerance": 1e-8, "flux_tolerance": 1e-3, "max_sweeps": 50000 }
//! }
//! ```
//!
//! `kinetics` and `solver` and each of their keys may be omitted. Unknown keys
//! are rejected so that typos do not silently fall back to defaults.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{
    build_cell, BoxRegion, CellConfig, ConfigError, ElectrodeSpec, GridSpec, Kinetics, Role,
    SolverParams, Vec3,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at `{path}`: expected {expected}")]
    Schema { path: String, expected: String },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

fn schema(path: &str, expected: impl Into<String>) -> ConfigParseError {
    ConfigParseError::Schema {
        path: path.to_string(),
        expected: expected.into(),
    }
}

fn object<'a>(
    v: &'a Value,
    path: &str,
    allowed: &[&str],
) -> Result<&'a Map<String, Value>, ConfigParseError> {
    let map = v.as_object().ok_or_else(|| schema(path, "an object"))?;
    if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(schema(
            &format!("{path}/{k}"),
            format!("no such key (allowed: {})", allowed.join(", ")),
        ));
    }
    Ok(map)
}

fn required<'a>(
    map: &'a Map<String, Value>,
    path: &str,
    key: &str,
    what: &str,
) -> Result<&'a Value, ConfigParseError> {
    map.get(key)
        .ok_or_else(|| schema(&format!("{path}/{key}"), format!("required {what}")))
}

fn number(v: &Value, path: &str) -> Result<f64, ConfigParseError> {
    v.as_f64().ok_or_else(|| schema(path, "a number"))
}

fn triple(v: &Value, path: &str) -> Result<Vec3, ConfigParseError> {
    match v.as_array() {
        Some(items) if items.len() == 3 => {
            let mut out = [0.0; 3];
            for (i, item) in items.iter().enumerate() {
                out[i] = number(item, &format!("{path}/{i}"))?;
            }
            Ok(out)
        }
        _ => Err(schema(path, "an array of 3 numbers")),
    }
}

fn count(v: &Value, path: &str) -> Result<usize, ConfigParseError> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| schema(path, "a non-negative integer"))
}

fn optional_number(
    map: &Map<String, Value>,
    path: &str,
    key: &str,
    default: f64,
) -> Result<f64, ConfigParseError> {
    map.get(key)
        .map_or(Ok(default), |v| number(v, &format!("{path}/{key}")))
}

fn electrode(v: &Value, path: &str) -> Result<ElectrodeSpec, ConfigParseError> {
    let map = object(v, path, &["id", "role", "box", "potential"])?;
    let id = required(map, path, "id", "string")?
        .as_str()
        .ok_or_else(|| schema(&format!("{path}/id"), "a string"))?
        .to_string();
    let role = match required(map, path, "role", "role")?.as_str() {
        Some("anode") => Role::Anode,
        Some("cathode") => Role::Cathode,
        Some("bipolar") => Role::Bipolar,
        _ => {
            return Err(schema(
                &format!("{path}/role"),
                "one of \"anode\", \"cathode\", \"bipolar\"",
            ))
        }
    };
    let box_path = format!("{path}/box");
    let bx = object(
        required(map, path, "box", "object with min and max")?,
        &box_path,
        &["min", "max"],
    )?;
    let region = BoxRegion::new(
        triple(
            required(bx, &box_path, "min", "array of 3 numbers")?,
            &format!("{box_path}/min"),
        )?,
        triple(
            required(bx, &box_path, "max", "array of 3 numbers")?,
            &format!("{box_path}/max"),
        )?,
    );
    let metallic_potential = match map.get("potential") {
        None | Some(Value::Null) => None,
        Some(p) => Some(number(p, &format!("{path}/potential"))?),
    };
    Ok(ElectrodeSpec {
        id,
        role,
        region,
        metallic_potential,
    })
}

fn config_from_value(root: &Value) -> Result<CellConfig, ConfigParseError> {
    let map = object(
        root,
        "",
        &[
            "cell_size",
            "conductivity",
            "grid",
            "electrodes",
            "kinetics",
            "solver",
        ],
    )?;
    let cell_size = triple(
        required(map, "", "cell_size", "array of 3 numbers")?,
        "/cell_size",
    )?;
    let conductivity = number(
        required(map, "", "conductivity", "number")?,
        "/conductivity",
    )?;

    let grid = object(
        required(map, "", "grid", "object with dims")?,
        "/grid",
        &["dims"],
    )?;
    let dims_value = required(grid, "/grid", "dims", "array of 3 node counts")?;
    let dims = match dims_value.as_array() {
        Some(items) if items.len() == 3 => {
            let mut d = [0; 3];
            for (i, item) in items.iter().enumerate() {
                d[i] = count(item, &format!("/grid/dims/{i}"))?;
            }
            d
        }
        _ => return Err(schema("/grid/dims", "an array of 3 node counts")),
    };

    let electrodes = required(map, "", "electrodes", "array of electrodes")?
        .as_array()
        .ok_or_else(|| schema("/electrodes", "an array of electrodes"))?
        .iter()
        .enumerate()
        .map(|(i, e)| electrode(e, &format!("/electrodes/{i}")))
        .collect::<Result<Vec<_>, _>>()?;

    let mut kinetics = Kinetics::default();
    if let Some(k) = map.get("kinetics") {
        let k = object(k, "/kinetics", &["e_A", "e_C", "K_A", "K_C"])?;
        kinetics = Kinetics {
            e_a: optional_number(k, "/kinetics", "e_A", kinetics.e_a)?,
            e_c: optional_number(k, "/kinetics", "e_C", kinetics.e_c)?,
            k_a: optional_number(k, "/kinetics", "K_A", kinetics.k_a)?,
            k_c: optional_number(k, "/kinetics", "K_C", kinetics.k_c)?,
        };
    }

    let mut solver = SolverParams::default();
    if let Some(s) = map.get("solver") {
        let s = object(
            s,
            "/solver",
            &[
                "omega",
                "lambda",
                "tolerance",
                "flux_tolerance",
                "max_sweeps",
            ],
        )?;
        solver.relaxation_factor =
            optional_number(s, "/solver", "omega", solver.relaxation_factor)?;
        solver.floating_damping = optional_number(s, "/solver", "lambda", solver.floating_damping)?;
        solver.tolerance = optional_number(s, "/solver", "tolerance", solver.tolerance)?;
        solver.flux_tolerance =
            optional_number(s, "/solver", "flux_tolerance", solver.flux_tolerance)?;
        if let Some(n) = s.get("max_sweeps") {
            solver.max_sweeps = count(n, "/solver/max_sweeps")?;
        }
    }

    Ok(CellConfig {
        cell_size,
        conductivity,
        grid: GridSpec { dims },
        electrodes,
        kinetics,
        solver,
    })
}

/// Reads the structure of a configuration without validating it.
pub fn config_from_json(text: &str) -> Result<CellConfig, ConfigParseError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    config_from_value(&root)
}

/// Parses and validates a configuration document.
pub fn parse_cell_config(text: &str) -> Result<CellConfig, ConfigParseError> {
    Ok(build_cell(config_from_json(text)?)?)
}

pub fn config_to_json(config: &CellConfig) -> String {
    serde_json::to_string_pretty(config).expect("configuration serializes")
}
