use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{StatusCode, Uri};
use axum::Json;
use planexplain_core::api::{
    AdvanceRequest, BackendChoice, ClassifyParams, CreateRun, EvaluateParams, FollowUpRequest,
    FollowUpResponse, Health, JobState, JobStatus, NarrateParams, PairList, PairSummary,
    RefineStageParams, RunList, RunView,
};
use planexplain_core::experiences::generate_synthetic;
use planexplain_core::pipeline::{valid_run_id, PairView, RefineParams, Run, Stage};
use planexplain_core::refine::{self, DeterministicBackend, RefinerBackend, RemoteBackend};
use planexplain_core::{evalmetrics, Specificity};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{ApiError, ApiResult};
use crate::{AppState, Slot};

const UNPROCESSABLE: StatusCode = StatusCode::UNPROCESSABLE_ENTITY;

/// Parses a JSON body, naming the offending field on failure.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    if body.is_empty() {
        return Err(ApiError::bad_request("request body is empty"));
    }
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            ApiError::bad_request(e.inner().to_string())
        } else {
            ApiError::bad_request(format!("{path}: {}", e.inner()))
        }
    })
}

/// Absent stage parameters read as `{}`, so required fields still fail.
fn parse_params<T: DeserializeOwned>(v: serde_json::Value) -> ApiResult<T> {
    let v = if v.is_null() { serde_json::json!({}) } else { v };
    serde_path_to_error::deserialize(v).map_err(|e| {
        ApiError::unprocessable(format!("params.{}: {}", e.path(), e.inner()))
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", format!("worker failed: {e}")))?
}

fn core(invalid: StatusCode) -> impl Fn(planexplain_core::Error) -> ApiError {
    move |e| ApiError::from_core(e, invalid)
}

/// Constructs the requested backend. Must run on a blocking thread: the
/// remote client owns its own runtime.
fn make_backend(state: &AppState, choice: BackendChoice) -> ApiResult<Box<dyn RefinerBackend>> {
    match choice {
        BackendChoice::Deterministic => Ok(Box::new(DeterministicBackend)),
        BackendChoice::Remote => {
            let cfg = state
                .config()
                .remote
                .clone()
                .ok_or_else(|| ApiError::unprocessable("no remote backend is configured on this server"))?;
            Ok(Box::new(RemoteBackend::new(cfg).map_err(core(UNPROCESSABLE))?))
        }
    }
}

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<Slot>> {
    state
        .slot(id)
        .ok_or_else(|| ApiError::not_found(format!("no run `{id}`")))
}

fn view(slot: &Slot) -> ApiResult<RunView> {
    let run = slot.run.read();
    let internal = core(StatusCode::INTERNAL_SERVER_ERROR);
    let narratives = if run.state().has(Stage::Narrated) {
        let mut counts = std::collections::BTreeMap::new();
        for level in run.levels() {
            counts.insert(level.level(), run.narratives(level).map_err(&internal)?.len());
        }
        Some(counts)
    } else {
        None
    };
    Ok(RunView {
        state: run.state().clone(),
        job: slot.job.lock().clone(),
        intervals: run.intervals().map_err(&internal)?,
        inference: run.inference().map_err(&internal)?,
        narratives,
        report: run.report().map_err(&internal)?,
    })
}

pub async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

pub async fn schema() -> Json<serde_json::Value> {
    Json(crate::schema::document())
}

pub async fn no_route(uri: Uri) -> ApiError {
    ApiError::not_found(format!("no route for {}", uri.path()))
}

pub async fn list_runs(State(state): State<AppState>) -> Json<RunList> {
    let slots: Vec<Arc<Slot>> = state.0.runs.read().values().cloned().collect();
    Json(RunList {
        runs: slots.iter().map(|s| s.run.read().state().clone()).collect(),
    })
}

pub async fn create_run(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<RunView>)> {
    let req: CreateRun = parse_body(&body)?;
    if let Some(id) = &req.corpus_id {
        if !valid_run_id(id) {
            return Err(ApiError::bad_request(format!(
                "corpus_id `{id}` must be 1-64 characters from [A-Za-z0-9_.-] and not start with `.`"
            )));
        }
    }
    let st = state.clone();
    let slot = blocking(move || {
        let corpus = match (req.experiences, req.generate) {
            (Some(records), None) => records,
            (None, Some(g)) => {
                let cfg = g.config.unwrap_or_default();
                generate_synthetic(g.seed, g.n, &cfg).map_err(core(StatusCode::BAD_REQUEST))?
            }
            _ => return Err(ApiError::bad_request("exactly one of `experiences` and `generate` is required")),
        };
        let _guard = st.0.creating.lock();
        let id = match req.corpus_id {
            Some(id) => {
                if st.slot(&id).is_some() || st.config().data_dir.join(&id).exists() {
                    return Err(ApiError::new(StatusCode::CONFLICT, "exists", format!("run `{id}` already exists")));
                }
                id
            }
            None => {
                let taken = |id: &str| st.slot(id).is_some() || st.config().data_dir.join(id).exists();
                (1..)
                    .map(|i| format!("run-{i:04}"))
                    .find(|id| !taken(id))
                    .expect("unbounded id range")
            }
        };
        let run = Run::create(&st.config().data_dir.join(&id), &id, &corpus).map_err(core(StatusCode::BAD_REQUEST))?;
        let slot = Slot::new(run);
        st.0.runs.write().insert(id, slot.clone());
        Ok(slot)
    })
    .await?;
    tracing::info!(run = %slot.run.read().state().corpus_id, "run created");
    Ok((StatusCode::CREATED, Json(view(&slot)?)))
}

pub async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RunView>> {
    let slot = lookup(&state, &id)?;
    Ok(Json(blocking(move || view(&slot)).await?))
}

pub async fn advance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<RunView>)> {
    let slot = lookup(&state, &id)?;
    let req: AdvanceRequest = parse_body(&body)?;
    if let Some(job) = slot.job.lock().as_ref() {
        if job.state == JobState::Running {
            return Err(ApiError::conflict(format!("a {} job is still running", job.stage)));
        }
    }
    slot.run.read().check_next(req.stage).map_err(core(UNPROCESSABLE))?;
    match req.stage {
        Stage::Ingested => Err(ApiError::conflict("runs are ingested when created")),
        Stage::Classified => {
            let p: ClassifyParams = parse_params(req.params)?;
            let s = slot.clone();
            blocking(move || s.run.write().classify(p.alpha).map(drop).map_err(core(UNPROCESSABLE))).await?;
            Ok((StatusCode::OK, Json(view(&slot)?)))
        }
        Stage::Inferred => {
            let _: Empty = parse_params(req.params)?;
            let s = slot.clone();
            blocking(move || s.run.write().infer().map(drop).map_err(core(UNPROCESSABLE))).await?;
            Ok((StatusCode::OK, Json(view(&slot)?)))
        }
        Stage::Narrated => {
            let p: NarrateParams = parse_params(req.params)?;
            let s = slot.clone();
            blocking(move || s.run.write().narrate(&p.levels()).map(drop).map_err(core(UNPROCESSABLE))).await?;
            Ok((StatusCode::OK, Json(view(&slot)?)))
        }
        Stage::Refined => refine_stage(state, slot, parse_params(req.params)?).await,
        Stage::Evaluated => {
            let p: EvaluateParams = parse_params(req.params)?;
            let s = slot.clone();
            blocking(move || s.run.write().evaluate(p.mu0).map(drop).map_err(core(UNPROCESSABLE))).await?;
            Ok((StatusCode::OK, Json(view(&slot)?)))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Empty {}

async fn refine_stage(
    state: AppState,
    slot: Arc<Slot>,
    p: RefineStageParams,
) -> ApiResult<(StatusCode, Json<RunView>)> {
    if p.in_flight == 0 {
        return Err(ApiError::unprocessable("params.in_flight must be at least 1"));
    }
    if p.follow_up.as_deref().is_some_and(|f| f.trim().is_empty()) {
        return Err(ApiError::unprocessable("params.follow_up is empty"));
    }
    if p.backend == BackendChoice::Remote && state.config().remote.is_none() {
        return Err(ApiError::unprocessable("no remote backend is configured on this server"));
    }
    let params = RefineParams {
        in_flight: p.in_flight,
        follow_up: p.follow_up,
    };
    let total = {
        let run = slot.run.read();
        let mut total = 0;
        for level in run.levels() {
            total += run.narratives(level).map_err(core(StatusCode::INTERNAL_SERVER_ERROR))?.len();
        }
        total
    };
    {
        let mut job = slot.job.lock();
        if job.as_ref().is_some_and(|j| j.state == JobState::Running) {
            return Err(ApiError::conflict("a refined job is still running"));
        }
        *job = Some(JobStatus {
            stage: Stage::Refined,
            state: JobState::Running,
            done: 0,
            total,
            error: None,
        });
    }
    let s = slot.clone();
    let work = move || -> ApiResult<()> {
        let result = (|| -> ApiResult<()> {
            let backend = make_backend(&state, p.backend)?;
            // Refine a copy so readers are never blocked by backend latency.
            let mut run = s.run.read().clone();
            let progress = |done: usize, total: usize| {
                if let Some(j) = s.job.lock().as_mut() {
                    j.done = done;
                    j.total = total;
                }
            };
            run.refine(backend.as_ref(), &params, &progress).map_err(core(UNPROCESSABLE))?;
            *s.run.write() = run;
            Ok(())
        })();
        let mut job = s.job.lock();
        if let Some(j) = job.as_mut() {
            match &result {
                Ok(()) => j.state = JobState::Succeeded,
                Err(e) => {
                    j.state = JobState::Failed;
                    j.error = Some(e.message.clone());
                }
            }
        }
        result
    };
    if p.wait {
        blocking(work).await?;
        Ok((StatusCode::OK, Json(view(&slot)?)))
    } else {
        let handle = tokio::task::spawn_blocking(work);
        tokio::spawn(async move {
            match handle.await {
                Ok(Ok(())) => tracing::info!("refinement job finished"),
                Ok(Err(e)) => tracing::warn!("refinement job failed: {}", e.message),
                Err(e) => tracing::error!("refinement job panicked: {e}"),
            }
        });
        Ok((StatusCode::ACCEPTED, Json(view(&slot)?)))
    }
}

pub async fn list_pairs(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PairList>> {
    let slot = lookup(&state, &id)?;
    blocking(move || {
        let run = slot.run.read();
        let labels = run.plan_labels().map_err(core(StatusCode::INTERNAL_SERVER_ERROR))?;
        let pairs: Vec<PairSummary> = run
            .pair_ids()
            .into_iter()
            .map(|pid| {
                let (a, b) = pid.split_once("__").expect("pair ids join two plans");
                PairSummary {
                    labels: (labels.get(a).cloned(), labels.get(b).cloned()),
                    plans: (a.to_string(), b.to_string()),
                    pair_id: pid.clone(),
                }
            })
            .collect();
        Ok(Json(PairList {
            corpus_id: run.state().corpus_id.clone(),
            count: pairs.len(),
            pairs,
        }))
    })
    .await
}

#[derive(Deserialize)]
pub struct LevelQuery {
    level: Option<u8>,
}

pub async fn get_pair(
    State(state): State<AppState>,
    Path((id, pid)): Path<(String, String)>,
    Query(q): Query<LevelQuery>,
) -> ApiResult<Json<PairView>> {
    let slot = lookup(&state, &id)?;
    let level = q
        .level
        .map(Specificity::new)
        .transpose()
        .map_err(core(StatusCode::BAD_REQUEST))?;
    blocking(move || {
        let run = slot.run.read();
        Ok(Json(run.pair_view(&pid, level).map_err(core(StatusCode::BAD_REQUEST))?))
    })
    .await
}

pub async fn follow_up(
    State(state): State<AppState>,
    Path((id, pid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<FollowUpResponse>> {
    let slot = lookup(&state, &id)?;
    let req: FollowUpRequest = parse_body(&body)?;
    if req.request.trim().is_empty() {
        return Err(ApiError::bad_request("request: must not be empty"));
    }
    blocking(move || {
        let _serial = slot.follow_ups.lock();
        let (mut rec, choice) = {
            let run = slot.run.read();
            if !run.state().has(Stage::Refined) {
                return Err(ApiError::conflict("follow-ups need a refined run"));
            }
            run.pair_view(&pid, None).map_err(core(StatusCode::BAD_REQUEST))?;
            let level = req.level.or_else(|| run.top_level()).unwrap_or(Specificity::THREE);
            let rec = run.session(&pid, level).map_err(core(StatusCode::BAD_REQUEST))?;
            let recorded = run
                .state()
                .params
                .get(&Stage::Refined)
                .and_then(|p| p.get("backend"))
                .and_then(|b| b.as_str())
                .unwrap_or("deterministic")
                .to_string();
            let choice = if recorded == DeterministicBackend.name() {
                BackendChoice::Deterministic
            } else {
                BackendChoice::Remote
            };
            (rec, choice)
        };
        let backend = make_backend(&state, choice)?;
        let explanation =
            refine::follow_up(&mut rec.session, &req.request, backend.as_ref()).map_err(core(StatusCode::BAD_REQUEST))?;
        let session = rec.session.clone();
        let narrative = session
            .messages
            .get(1)
            .map(|m| m.content.clone())
            .unwrap_or_default();
        slot.run
            .write()
            .replace_session(rec)
            .map_err(core(StatusCode::BAD_REQUEST))?;
        let metrics = evalmetrics::report(&narrative, &explanation.text).map_err(core(StatusCode::INTERNAL_SERVER_ERROR))?;
        Ok(Json(FollowUpResponse {
            explanation,
            metrics,
            session,
        }))
    })
    .await
}
