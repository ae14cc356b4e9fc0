//! HTTP API over the run store. Discovery requests run on the blocking pool;
//! clients poll `GET /api/runs/{id}`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use tslex_core::ingest::read_recordings;
use tslex_core::pipeline::{
    read_input, run_id, run_on_recordings, LagResult, PipelineConfig, PopulationStats, RunResult,
};
use tslex_core::sd::Selector;
use tslex_core::PipelineError;

use crate::store::{RunStatus, RunStore};

type AppState = Arc<RunStore>;

/// `{"id": .., "status": .., ...}` with the status fields inlined.
fn status_body(id: &str, status: &RunStatus, extra: &[(&str, serde_json::Value)]) -> serde_json::Value {
    let mut v = serde_json::to_value(status).expect("status serializes");
    let obj = v.as_object_mut().expect("tagged enum is an object");
    obj.insert("id".into(), json!(id));
    for (k, x) in extra {
        obj.insert((*k).into(), x.clone());
    }
    v
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn router(store: Arc<RunStore>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/runs", get(list_runs).post(submit_run))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/subgroups", get(get_subgroups))
        .route("/api/runs/{id}/radar", get(get_radar))
        .with_state(store)
}

pub async fn serve(state_dir: &Path, addr: SocketAddr) -> std::io::Result<()> {
    let store = Arc::new(RunStore::open(state_dir)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_runs(State(store): State<AppState>) -> Response {
    Json(store.summaries()).into_response()
}

async fn submit_run(State(store): State<AppState>, body: String) -> Response {
    let cfg = match PipelineConfig::from_json_str(&body) {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    if let Err(e) = cfg.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let (bytes, digest) = match read_input(&cfg) {
        Ok(x) => x,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let id = run_id(&cfg, &digest);
    match store.register(&id, &cfg, &digest) {
        Ok(false) => {
            let status = store.status(&id).unwrap_or(RunStatus::Queued);
            return (
                StatusCode::OK,
                Json(status_body(&id, &status, &[("existing", json!(true))])),
            )
                .into_response();
        }
        Ok(true) => {}
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }

    let task_store = store.clone();
    let task_id = id.clone();
    tokio::task::spawn_blocking(move || {
        task_store.mark_running(&task_id);
        let outcome = read_recordings(bytes.as_slice())
            .map_err(PipelineError::from)
            .and_then(|groups| run_on_recordings(&cfg, &groups, &digest))
            .and_then(|result| task_store.complete(&task_id, result));
        if let Err(e) = outcome {
            log::warn!("run {task_id} failed: {e}");
            task_store.fail(&task_id, e.stage(), e.to_string());
        }
    });
    (
        StatusCode::ACCEPTED,
        Json(status_body(&id, &RunStatus::Queued, &[("existing", json!(false))])),
    )
        .into_response()
}

/// The completed run, or the run's status while it is pending or failed.
async fn get_run(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match (store.result(&id), store.status(&id)) {
        (Some(result), _) => ([(header::CONTENT_TYPE, "application/json")], result.to_document()).into_response(),
        (None, Some(status)) => Json(status_body(&id, &status, &[])).into_response(),
        (None, None) => error(StatusCode::NOT_FOUND, format!("run `{id}` not found")),
    }
}

#[derive(Debug, Deserialize)]
struct LagQuery {
    lag: Option<usize>,
}

fn completed_lag(store: &RunStore, id: &str, lag: Option<usize>) -> Result<(Arc<RunResult>, usize), Box<Response>> {
    let Some(result) = store.result(id) else {
        return Err(Box::new(match store.status(id) {
            Some(status) => (
                StatusCode::CONFLICT,
                Json(status_body(
                    id,
                    &status,
                    &[("error", json!(format!("run `{id}` is not completed")))],
                )),
            )
                .into_response(),
            None => error(StatusCode::NOT_FOUND, format!("run `{id}` not found")),
        }));
    };
    let lag = match lag {
        Some(l) => l,
        None => result.lags.first().map_or(0, |l| l.lag),
    };
    if result.lag(lag).is_none() {
        return Err(Box::new(error(
            StatusCode::NOT_FOUND,
            format!("run `{id}` has no lag {lag}"),
        )));
    }
    Ok((result, lag))
}

#[derive(Serialize)]
struct SubgroupRow<'a> {
    rank: usize,
    pattern: String,
    selectors: &'a [Selector],
    size: usize,
    subgroup_mean: f64,
    population_mean: f64,
    quality: f64,
}

#[derive(Serialize)]
struct SubgroupsResponse<'a> {
    run_id: &'a str,
    lag: usize,
    population: &'a PopulationStats,
    subgroups: Vec<SubgroupRow<'a>>,
}

async fn get_subgroups(
    State(store): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<LagQuery>,
) -> Response {
    let (result, lag) = match completed_lag(&store, &id, q.lag) {
        Ok(x) => x,
        Err(r) => return *r,
    };
    let l: &LagResult = result.lag(lag).expect("checked");
    let subgroups = l
        .subgroups
        .iter()
        .enumerate()
        .map(|(i, s)| SubgroupRow {
            rank: i + 1,
            pattern: s.pattern.to_string(),
            selectors: s.pattern.selectors(),
            size: s.size,
            subgroup_mean: s.subgroup_mean,
            population_mean: s.population_mean,
            quality: s.quality,
        })
        .collect();
    Json(SubgroupsResponse {
        run_id: &result.run_id,
        lag,
        population: &l.population,
        subgroups,
    })
    .into_response()
}

#[derive(Serialize)]
struct RadarRow<'a> {
    rank: usize,
    pattern: String,
    quality: f64,
    size: usize,
    subgroup_mean: f64,
    /// Mean label level (low 0, medium 0.5, high 1) over the covered rows.
    attributes: BTreeMap<&'a str, f64>,
}

#[derive(Serialize)]
struct RadarResponse<'a> {
    run_id: &'a str,
    lag: usize,
    axes: [&'static str; 3],
    attributes: &'a [String],
    subgroups: Vec<RadarRow<'a>>,
}

async fn get_radar(State(store): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<LagQuery>) -> Response {
    let (result, lag) = match completed_lag(&store, &id, q.lag) {
        Ok(x) => x,
        Err(r) => return *r,
    };
    let l = result.lag(lag).expect("checked");
    let subgroups = l
        .subgroups
        .iter()
        .zip(&l.profiles)
        .enumerate()
        .map(|(i, (s, levels))| RadarRow {
            rank: i + 1,
            pattern: s.pattern.to_string(),
            quality: s.quality,
            size: s.size,
            subgroup_mean: s.subgroup_mean,
            attributes: l
                .profile_attributes
                .iter()
                .map(String::as_str)
                .zip(levels.iter().copied())
                .collect(),
        })
        .collect();
    Json(RadarResponse {
        run_id: &result.run_id,
        lag,
        axes: ["quality", "size", "subgroup_mean"],
        attributes: &l.profile_attributes,
        subgroups,
    })
    .into_response()
}
