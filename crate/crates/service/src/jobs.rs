//! Job records and the worker that solves them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use ewcell_core::io::bundle::{read_result_bundle, write_result_bundle};
use ewcell_core::{solve_cell, CellConfig, ConvergenceReport, ResultBundle, RunOptions};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JobProgress {
    pub sweeps: usize,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRef {
    /// Bundle directory, when the service persists results.
    pub bundle_dir: Option<PathBuf>,
    pub manifest_digest: Option<String>,
}

/// What `GET /jobs/{id}` returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub config: CellConfig,
    pub progress: JobProgress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ConvergenceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ResultRef>,
}

pub(crate) struct Entry {
    pub job: Job,
    pub bundle: Option<Arc<ResultBundle>>,
}

#[derive(Default)]
pub(crate) struct Table {
    pub entries: BTreeMap<String, Entry>,
    pub next_id: u64,
}

impl Table {
    pub fn allocate_id(&mut self) -> String {
        self.next_id += 1;
        format!("job-{}", self.next_id)
    }

    fn update(&mut self, id: &str, f: impl FnOnce(&mut Entry)) {
        if let Some(e) = self.entries.get_mut(id) {
            f(e);
        }
    }
}

pub(crate) type SharedTable = Arc<RwLock<Table>>;

/// Registers every readable bundle below `dir` as a done job named after its
/// directory.
pub(crate) fn load_existing(table: &mut Table, dir: &Path) {
    let Ok(read) = std::fs::read_dir(dir) else {
        return;
    };
    let mut dirs: Vec<PathBuf> = read
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for path in dirs {
        let Some(id) = path
            .file_name()
            .and_then(|n| n.to_str())
            .map(str::to_string)
        else {
            continue;
        };
        match read_result_bundle(&path) {
            Ok(bundle) => {
                if let Some(n) = id.strip_prefix("job-").and_then(|n| n.parse::<u64>().ok()) {
                    table.next_id = table.next_id.max(n);
                }
                let digest =
                    std::fs::read_to_string(path.join(ewcell_core::io::bundle::MANIFEST_DIGEST))
                        .ok()
                        .map(|s| s.trim().to_string());
                let job = Job {
                    id: id.clone(),
                    state: JobState::Done,
                    config: bundle.config.clone(),
                    progress: JobProgress {
                        sweeps: bundle.report.sweeps,
                        residual: Some(bundle.report.final_residual),
                    },
                    report: Some(bundle.report.clone()),
                    error: None,
                    result: Some(ResultRef {
                        bundle_dir: Some(path.clone()),
                        manifest_digest: digest,
                    }),
                };
                log::info!("loaded stored result {id}");
                table.entries.insert(
                    id,
                    Entry {
                        job,
                        bundle: Some(Arc::new(bundle)),
                    },
                );
            }
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
}

pub(crate) struct WorkerContext {
    pub table: SharedTable,
    pub results_dir: Option<PathBuf>,
    pub parallel: bool,
}

/// Pulls job ids off the queue and solves them one at a time.
pub(crate) async fn worker(ctx: Arc<WorkerContext>, queue: Arc<Mutex<mpsc::Receiver<String>>>) {
    loop {
        let next = queue.lock().await.recv().await;
        let Some(id) = next else {
            return;
        };
        let config = {
            let mut table = ctx.table.write().expect("job table poisoned");
            let Some(entry) = table.entries.get_mut(&id) else {
                continue;
            };
            entry.job.state = JobState::Running;
            entry.job.config.clone()
        };
        log::info!("running {id}");
        let ctx2 = Arc::clone(&ctx);
        let id2 = id.clone();
        let outcome = tokio::task::spawn_blocking(move || run(&ctx2, &id2, &config)).await;
        let mut table = ctx.table.write().expect("job table poisoned");
        match outcome {
            Ok(Ok((bundle, result))) => table.update(&id, |e| {
                e.job.progress = JobProgress {
                    sweeps: bundle.report.sweeps,
                    residual: Some(bundle.report.final_residual),
                };
                e.job.report = Some(bundle.report.clone());
                if bundle.report.converged {
                    e.job.state = JobState::Done;
                    e.job.result = Some(result);
                    e.bundle = Some(Arc::new(bundle));
                } else {
                    e.job.state = JobState::Failed;
                    e.job.error = Some(format!(
                        "did not converge within {} sweeps",
                        bundle.report.sweeps
                    ));
                }
            }),
            Ok(Err(message)) => table.update(&id, |e| {
                e.job.state = JobState::Failed;
                e.job.error = Some(message);
            }),
            Err(join) => table.update(&id, |e| {
                e.job.state = JobState::Failed;
                e.job.error = Some(format!("solver task aborted: {join}"));
            }),
        }
        log::info!("{id} finished");
    }
}

fn run(
    ctx: &WorkerContext,
    id: &str,
    config: &CellConfig,
) -> Result<(ResultBundle, ResultRef), String> {
    let table = Arc::clone(&ctx.table);
    let mut observer = |p: ewcell_core::Progress| {
        if p.sweep.is_multiple_of(10) || p.sweep == 1 {
            if let Ok(mut t) = table.write() {
                t.update(id, |e| {
                    e.job.progress = JobProgress {
                        sweeps: p.sweep,
                        residual: Some(p.residual),
                    }
                });
            }
        }
    };
    let options = RunOptions {
        parallel: ctx.parallel,
    };
    let bundle = solve_cell(config, options, &mut observer).map_err(|e| e.to_string())?;
    let mut result = ResultRef {
        bundle_dir: None,
        manifest_digest: None,
    };
    if let (Some(dir), true) = (&ctx.results_dir, bundle.report.converged) {
        let path = dir.join(id);
        let digest = write_result_bundle(&path, &bundle).map_err(|e| e.to_string())?;
        result = ResultRef {
            bundle_dir: Some(path),
            manifest_digest: Some(digest),
        };
    }
    Ok((bundle, result))
}
