//! Append-only run store: `<state>/runs/<id>/` holds `run.json` (config
//! snapshot), then either `result.json` plus CSV exports or `error.json`.
//! Files are written once and never replaced.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tslex_core::pipeline::{export_run, ExportFormat, PipelineConfig, RunResult, DOCUMENT_FILE};
use tslex_core::PipelineError;

const META_FILE: &str = "run.json";
const ERROR_FILE: &str = "error.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Queued,
    Running,
    Completed,
    Failed { stage: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunMeta {
    id: String,
    input_digest: String,
    submitted_at: u64,
    config: PipelineConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub id: String,
    #[serde(flatten)]
    pub status: RunStatus,
    pub submitted_at: u64,
    pub input_digest: String,
    pub config: PipelineConfig,
}

struct Entry {
    meta: RunMeta,
    status: RunStatus,
    result: Option<Arc<RunResult>>,
}

pub struct RunStore {
    runs_dir: PathBuf,
    entries: Mutex<BTreeMap<String, Entry>>,
}

fn write_new(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(tmp, path)
}

impl RunStore {
    /// Opens (or creates) the store and loads every run already on disk.
    /// Runs that never finished are reported as failed.
    pub fn open(state_dir: &Path) -> io::Result<Self> {
        let runs_dir = state_dir.join("runs");
        fs::create_dir_all(&runs_dir)?;
        let mut entries = BTreeMap::new();
        for dir in fs::read_dir(&runs_dir)? {
            let dir = dir?.path();
            let Ok(text) = fs::read_to_string(dir.join(META_FILE)) else {
                continue;
            };
            let meta: RunMeta = match serde_json::from_str(&text) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("skipping {}: {e}", dir.display());
                    continue;
                }
            };
            let (status, result) = if let Ok(doc) = fs::read_to_string(dir.join(DOCUMENT_FILE)) {
                match RunResult::from_document(&doc) {
                    Ok(r) => (RunStatus::Completed, Some(Arc::new(r))),
                    Err(e) => (
                        RunStatus::Failed {
                            stage: "store".into(),
                            message: format!("unreadable result document: {e}"),
                        },
                        None,
                    ),
                }
            } else if let Ok(err) = fs::read_to_string(dir.join(ERROR_FILE)) {
                let status = serde_json::from_str(&err).unwrap_or(RunStatus::Failed {
                    stage: "store".into(),
                    message: err,
                });
                (status, None)
            } else {
                (
                    RunStatus::Failed {
                        stage: "service".into(),
                        message: "interrupted before completion".into(),
                    },
                    None,
                )
            };
            entries.insert(meta.id.clone(), Entry { meta, status, result });
        }
        Ok(RunStore {
            runs_dir,
            entries: Mutex::new(entries),
        })
    }

    pub fn run_dir(&self, id: &str) -> PathBuf {
        self.runs_dir.join(id)
    }

    /// Records a new run. Returns `false` when the id is already known.
    pub fn register(&self, id: &str, config: &PipelineConfig, input_digest: &str) -> io::Result<bool> {
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(id) {
            return Ok(false);
        }
        let meta = RunMeta {
            id: id.to_string(),
            input_digest: input_digest.to_string(),
            submitted_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config: config.clone(),
        };
        let dir = self.run_dir(id);
        fs::create_dir_all(&dir)?;
        write_new(&dir.join(META_FILE), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        entries.insert(
            id.to_string(),
            Entry {
                meta,
                status: RunStatus::Queued,
                result: None,
            },
        );
        Ok(true)
    }

    pub fn mark_running(&self, id: &str) {
        if let Some(e) = self.entries.lock().unwrap().get_mut(id) {
            e.status = RunStatus::Running;
        }
    }

    pub fn complete(&self, id: &str, result: RunResult) -> Result<(), PipelineError> {
        let dir = self.run_dir(id);
        let doc = dir.join(DOCUMENT_FILE);
        if !doc.exists() {
            write_new(&doc, result.to_document().as_bytes())
                .map_err(|e| PipelineError::Export(format!("{}: {e}", doc.display())))?;
            export_run(&result, &dir.join("exports"), ExportFormat::Csv)?;
        }
        if let Some(e) = self.entries.lock().unwrap().get_mut(id) {
            e.status = RunStatus::Completed;
            e.result = Some(Arc::new(result));
        }
        Ok(())
    }

    pub fn fail(&self, id: &str, stage: &str, message: String) {
        let status = RunStatus::Failed {
            stage: stage.to_string(),
            message,
        };
        let path = self.run_dir(id).join(ERROR_FILE);
        if !path.exists() {
            let text = serde_json::to_string_pretty(&status).expect("status serializes");
            if let Err(e) = write_new(&path, text.as_bytes()) {
                log::error!("{}: {e}", path.display());
            }
        }
        if let Some(e) = self.entries.lock().unwrap().get_mut(id) {
            e.status = status;
        }
    }

    pub fn status(&self, id: &str) -> Option<RunStatus> {
        self.entries.lock().unwrap().get(id).map(|e| e.status.clone())
    }

    pub fn result(&self, id: &str) -> Option<Arc<RunResult>> {
        self.entries.lock().unwrap().get(id).and_then(|e| e.result.clone())
    }

    /// Runs in submission order.
    pub fn summaries(&self) -> Vec<RunSummary> {
        let entries = self.entries.lock().unwrap();
        let mut out: Vec<RunSummary> = entries
            .values()
            .map(|e| RunSummary {
                id: e.meta.id.clone(),
                status: e.status.clone(),
                submitted_at: e.meta.submitted_at,
                input_digest: e.meta.input_digest.clone(),
                config: e.meta.config.clone(),
            })
            .collect();
        out.sort_by(|a, b| a.submitted_at.cmp(&b.submitted_at).then_with(|| a.id.cmp(&b.id)));
        out
    }
}
