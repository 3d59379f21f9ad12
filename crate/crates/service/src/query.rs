use std::collections::HashMap;
use std::str::FromStr;

use ewcell_core::field::Quantity;
use ewcell_core::model::{Axis, Vec3};
use ewcell_core::{Grid, TraceParams};

use crate::error::ApiError;

type Q = HashMap<String, String>;

pub(crate) fn required<'a>(q: &'a Q, key: &str) -> Result<&'a str, ApiError> {
    q.get(key)
        .map(String::as_str)
        .ok_or_else(|| ApiError::BadQuery(format!("missing query parameter `{key}`")))
}

fn parse<T: FromStr>(q: &Q, key: &str) -> Result<Option<T>, ApiError> {
    match q.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| ApiError::BadQuery(format!("cannot parse `{key}` = `{raw}`"))),
    }
}

fn number(q: &Q, key: &str) -> Result<f64, ApiError> {
    required(q, key)?;
    let v: f64 = parse(q, key)?.expect("present");
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ApiError::BadQuery(format!("`{key}` must be finite")))
    }
}

pub(crate) fn slice(q: &Q) -> Result<(Axis, f64, Quantity), ApiError> {
    let axis = Axis::from_str(required(q, "axis")?).map_err(ApiError::BadQuery)?;
    let coord = number(q, "coord")?;
    let quantity = match q.get("quantity") {
        None => Quantity::Potential,
        Some(s) => Quantity::from_str(s).map_err(ApiError::BadQuery)?,
    };
    Ok((axis, coord, quantity))
}

pub(crate) fn point(q: &Q) -> Result<Vec3, ApiError> {
    Ok([number(q, "x")?, number(q, "y")?, number(q, "z")?])
}

/// Requested electrode ids, all of them when the parameter is absent.
pub(crate) fn electrodes(q: &Q, grid: &Grid) -> Result<Vec<String>, ApiError> {
    match q.get("electrodes") {
        None => Ok(grid.electrodes.iter().map(|e| e.id.clone()).collect()),
        Some(list) => {
            let ids: Vec<String> = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            if ids.is_empty() {
                return Err(ApiError::BadQuery("`electrodes` lists no electrode".into()));
            }
            for id in &ids {
                if grid.electrode_index(id).is_err() {
                    return Err(ApiError::UnknownElectrode(id.clone()));
                }
            }
            Ok(ids)
        }
    }
}

pub(crate) fn trace_params(q: &Q, grid: &Grid) -> Result<TraceParams, ApiError> {
    let d = TraceParams::for_grid(grid);
    let params = TraceParams {
        density: parse(q, "density")?.unwrap_or(d.density),
        initial_step: parse(q, "initial_step")?.unwrap_or(d.initial_step),
        min_step: parse(q, "min_step")?.unwrap_or(d.min_step),
        max_step: parse(q, "max_step")?.unwrap_or(d.max_step),
        error_tolerance: parse(q, "error_tolerance")?.unwrap_or(d.error_tolerance),
        max_vertices: parse(q, "max_vertices")?.unwrap_or(d.max_vertices),
        singularity_threshold: parse(q, "singularity_threshold")?
            .unwrap_or(d.singularity_threshold),
    };
    params
        .validate()
        .map_err(|e| ApiError::BadQuery(e.to_string()))?;
    Ok(params)
}
