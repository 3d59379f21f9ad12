//! HTTP job service: submit cell configurations, poll their solves, and
//! query the results.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/jobs` | cell configuration JSON, answers `202 {"id", "state"}` |
//! | GET | `/jobs` | every job |
//! | GET | `/jobs/{id}` | [`Job`] |
//! | GET | `/jobs/{id}/geometry` | snapped geometry |
//! | GET | `/jobs/{id}/slice?axis=x&coord=0.5&quantity=V` | slice image |
//! | GET | `/jobs/{id}/deposit?electrode=C` | per-face normal current |
//! | GET | `/jobs/{id}/streamlines?electrodes=A,B&density=2` | streamlines grouped by electrode |
//! | GET | `/jobs/{id}/probe?x=..&y=..&z=..` | probe sample |
//!
//! Query endpoints answer 409 until the job is done. Streamlines also take
//! `initial_step`, `min_step`, `max_step`, `error_tolerance`, `max_vertices`
//! and `singularity_threshold`; omitted ones default to the grid-scaled
//! tracer settings.

mod error;
mod jobs;
mod query;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use ewcell_core::field::{self, FieldError};
use ewcell_core::io::bundle::Geometry;
use ewcell_core::io::config::config_from_json;
use ewcell_core::io::ConfigParseError;
use ewcell_core::trace::{self, TraceError};
use ewcell_core::{build_cell, discretize, GridError, ResultBundle};
use tokio::sync::{mpsc, Mutex};

pub use error::ApiError;
pub use jobs::{Job, JobProgress, JobState, ResultRef};

use jobs::{Entry, SharedTable, Table, WorkerContext};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Where finished bundles are written and loaded from at start-up.
    pub results_dir: Option<PathBuf>,
    /// Jobs waiting beyond this are refused with 503.
    pub queue_capacity: usize,
    /// Number of jobs solved at the same time.
    pub workers: usize,
    /// Red-black sweeps on worker threads.
    pub parallel: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            results_dir: None,
            queue_capacity: 16,
            workers: 1,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

const CACHE_LIMIT: usize = 64;

struct Inner {
    table: SharedTable,
    queue: mpsc::Sender<String>,
    streamline_cache: StdMutex<HashMap<String, Bytes>>,
}

/// Shared service state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Loads stored results and starts the workers on the current Tokio
    /// runtime.
    pub fn start(config: ServiceConfig) -> Result<Self, std::io::Error> {
        let mut table = Table::default();
        if let Some(dir) = &config.results_dir {
            std::fs::create_dir_all(dir)?;
            jobs::load_existing(&mut table, dir);
        }
        let table = Arc::new(RwLock::new(table));
        let (tx, rx) = mpsc::channel(config.queue_capacity.max(1));
        let rx = Arc::new(Mutex::new(rx));
        let ctx = Arc::new(WorkerContext {
            table: Arc::clone(&table),
            results_dir: config.results_dir.clone(),
            parallel: config.parallel,
        });
        for _ in 0..config.workers.max(1) {
            tokio::spawn(jobs::worker(Arc::clone(&ctx), Arc::clone(&rx)));
        }
        Ok(Self {
            inner: Arc::new(Inner {
                table,
                queue: tx,
                streamline_cache: StdMutex::new(HashMap::new()),
            }),
        })
    }

    pub fn job(&self, id: &str) -> Option<Job> {
        let table = self.inner.table.read().expect("job table poisoned");
        table.entries.get(id).map(|e| e.job.clone())
    }

    /// The solved result of a done job.
    pub fn result(&self, id: &str) -> Result<Arc<ResultBundle>, ApiError> {
        let table = self.inner.table.read().expect("job table poisoned");
        let entry = table
            .entries
            .get(id)
            .ok_or_else(|| ApiError::UnknownJob(id.to_string()))?;
        match (&entry.bundle, entry.job.state) {
            (Some(b), JobState::Done) => Ok(Arc::clone(b)),
            (_, state) => Err(ApiError::NotDone {
                id: id.to_string(),
                state,
            }),
        }
    }

    /// Validates and enqueues a configuration document.
    pub fn submit(&self, text: &str) -> Result<Job, ApiError> {
        let config = config_from_json(text).map_err(|e| match e {
            ConfigParseError::Syntax { .. } => ApiError::MalformedConfig(e.to_string()),
            other => ApiError::InvalidConfig(other.to_string()),
        })?;
        let config = build_cell(config).map_err(|e| ApiError::InvalidConfig(e.to_string()))?;
        discretize(&config).map_err(|e| ApiError::InvalidConfig(e.to_string()))?;
        let job = {
            let mut table = self.inner.table.write().expect("job table poisoned");
            let id = table.allocate_id();
            let job = Job {
                id: id.clone(),
                state: JobState::Queued,
                config,
                progress: JobProgress::default(),
                report: None,
                error: None,
                result: None,
            };
            self.inner
                .queue
                .try_send(id.clone())
                .map_err(|_| ApiError::QueueFull)?;
            table.entries.insert(
                id,
                Entry {
                    job: job.clone(),
                    bundle: None,
                },
            );
            job
        };
        log::info!("queued {}", job.id);
        Ok(job)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/jobs", get(list_jobs).post(submit_job))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/geometry", get(geometry))
        .route("/jobs/{id}/slice", get(slice))
        .route("/jobs/{id}/deposit", get(deposit))
        .route("/jobs/{id}/streamlines", get(streamlines))
        .route("/jobs/{id}/probe", get(probe))
        .with_state(state)
}

/// Runs the service on `addr` until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), std::io::Error> {
    let state = AppState::start(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

type Params = Query<HashMap<String, String>>;

async fn submit_job(State(state): State<AppState>, body: String) -> Result<Response, ApiError> {
    let job = state.submit(&body)?;
    let body = serde_json::json!({ "id": job.id, "state": job.state });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<Job>> {
    let table = state.inner.table.read().expect("job table poisoned");
    Json(table.entries.values().map(|e| e.job.clone()).collect())
}

async fn job_status(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Job>, ApiError> {
    state.job(&id).map(Json).ok_or(ApiError::UnknownJob(id))
}

async fn geometry(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Geometry>, ApiError> {
    let bundle = state.result(&id)?;
    Ok(Json(Geometry::of(&bundle.grid)))
}

fn field_error(e: FieldError) -> ApiError {
    match e {
        FieldError::Grid(GridError::UnknownElectrode { id }) => ApiError::UnknownElectrode(id),
        other => ApiError::BadQuery(other.to_string()),
    }
}

async fn slice(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let bundle = state.result(&id)?;
    let (axis, coord, quantity) = query::slice(&q)?;
    let image = field::extract_slice(&bundle.grid, &bundle.fields, axis, coord, quantity)
        .map_err(field_error)?;
    Ok(Json(image).into_response())
}

async fn deposit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let bundle = state.result(&id)?;
    let electrode = query::required(&q, "electrode")?;
    let map =
        field::normal_current_map(&bundle.grid, &bundle.fields, electrode).map_err(field_error)?;
    Ok(Json(map).into_response())
}

async fn probe(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let bundle = state.result(&id)?;
    let p = query::point(&q)?;
    let sample = field::probe(&bundle.grid, &bundle.fields, p).map_err(field_error)?;
    Ok(Json(sample).into_response())
}

async fn streamlines(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let bundle = state.result(&id)?;
    let electrodes = query::electrodes(&q, &bundle.grid)?;
    let params = query::trace_params(&q, &bundle.grid)?;
    let key = format!("{id}|{}|{params:?}", electrodes.join(","));
    let cached = state
        .inner
        .streamline_cache
        .lock()
        .expect("cache poisoned")
        .get(&key)
        .cloned();
    let body = match cached {
        Some(body) => body,
        None => {
            let b = Arc::clone(&bundle);
            let set = tokio::task::spawn_blocking(move || {
                let ids: Vec<&str> = electrodes.iter().map(String::as_str).collect();
                trace::trace_all(&b.grid, &b.fields, &ids, &params)
            })
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))?
            .map_err(|e| match e {
                TraceError::Grid(GridError::UnknownElectrode { id }) => {
                    ApiError::UnknownElectrode(id)
                }
                other => ApiError::BadQuery(other.to_string()),
            })?;
            let body = Bytes::from(ewcell_core::io::streamlines_to_json(&set));
            let mut cache = state.inner.streamline_cache.lock().expect("cache poisoned");
            if cache.len() >= CACHE_LIMIT {
                cache.clear();
            }
            cache.insert(key, body.clone());
            body
        }
    };
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}
