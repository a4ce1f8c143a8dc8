//! HTTP session service over the lasercover pipeline.
//!
//! A session walks mesh → region → plan (or simulated pass) → coverage / heatmap.
//! Trials run as background jobs. With a persistence directory every upload and plan
//! is also written as the file the CLI reads and writes.

mod error;

pub use error::{parse_body, ApiError, ErrorBody};

use std::collections::HashMap;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{Mutex, OwnedMutexGuard};
use uuid::Uuid;

use lasercover_core::coverage::{dose_map_with_mask, rasterize, score_plan, CoverageReport, DEFAULT_PIXEL_SIZE};
use lasercover_core::geometry::Vec2;
use lasercover_core::operator_sim::{simulate_pass, OperatorModel, RngSeed};
use lasercover_core::planner::{plan_region, validate_plan, LaserSpec, PlanRequest, TreatmentPlan, ValidationReport};
use lasercover_core::surface::{parse_mesh, MeshFormat, Region, RegionSpec, RegionWarning, SurfaceModel};
use lasercover_core::trial::{run_trial, TrialConfig, TrialResult};
use lasercover_core::{artifact_json, Execution};

pub const MESH_FILE: &str = "mesh.ply";
pub const REGION_FILE: &str = "region.json";
pub const PLAN_FILE: &str = "plan.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const TRIAL_JSON_FILE: &str = "trial.json";
pub const TRIAL_CSV_FILE: &str = "trial.csv";

/// Response header carrying the per-shot fluence (mJ/cm²) of a heatmap.
pub const FLUENCE_HEADER: &str = "x-lasercover-fluence";

const MAX_BODY_BYTES: usize = 256 << 20;

#[derive(Clone, Debug, Default)]
pub struct ServiceConfig {
    /// Write-through directory; sessions go to `<dir>/<id>/`, trials to `<dir>/trials/<job>/`.
    pub persist_dir: Option<PathBuf>,
    pub execution: Execution,
}

/// Per-session pipeline state. Each stage clears the stages downstream of it.
#[derive(Debug, Default)]
pub struct Session {
    surface: Option<Arc<SurfaceModel>>,
    region: Option<Arc<Region>>,
    plan: Option<Arc<TreatmentPlan>>,
}

#[derive(Clone, Debug)]
enum Job {
    Running,
    Done(Arc<TrialResult>),
    Failed(ErrorBody),
}

type SessionHandle = Arc<Mutex<Session>>;

#[derive(Clone, Default)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<StdMutex<HashMap<Uuid, SessionHandle>>>,
    jobs: Arc<StdMutex<HashMap<Uuid, Job>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self { config: Arc::new(config), ..Self::default() }
    }

    /// Lock handle of a session. Holding it makes mutating requests on that session
    /// fail with 409.
    pub fn session_handle(&self, id: Uuid) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().unwrap().get(&id).cloned()
    }

    fn lookup(&self, id: &str) -> Result<(Uuid, SessionHandle), ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::not_found("session", id))?;
        let handle = self.session_handle(uuid).ok_or_else(|| ApiError::not_found("session", id))?;
        Ok((uuid, handle))
    }

    /// Exclusive access for a mutation; a request already holding it means 409.
    fn lock_for_update(&self, id: &str) -> Result<(Uuid, OwnedMutexGuard<Session>), ApiError> {
        let (uuid, handle) = self.lookup(id)?;
        let guard = handle.try_lock_owned().map_err(|_| ApiError::busy())?;
        Ok((uuid, guard))
    }

    fn session_dir(&self, id: Uuid) -> Option<PathBuf> {
        self.config.persist_dir.as_ref().map(|d| d.join(id.to_string()))
    }

    fn persist(&self, id: Uuid, files: &[(&str, &[u8])]) -> Result<(), ApiError> {
        match self.session_dir(id) {
            Some(dir) => write_files(&dir, files),
            None => Ok(()),
        }
    }
}

/// Removes stale downstream files after an upstream stage changes.
fn clear_files(dir: Option<PathBuf>, names: &[&str]) -> Result<(), ApiError> {
    let Some(dir) = dir else { return Ok(()) };
    for name in names {
        match std::fs::remove_file(dir.join(name)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
                return Err(ApiError::internal(format!("cannot remove {name}: {e}")))
            }
            _ => {}
        }
    }
    Ok(())
}

fn write_files(dir: &FsPath, files: &[(&str, &[u8])]) -> Result<(), ApiError> {
    let io = |e: std::io::Error| ApiError::internal(format!("cannot write {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes).map_err(io)?;
    }
    Ok(())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status).delete(delete_session))
        .route("/sessions/{id}/mesh", post(upload_mesh))
        .route("/sessions/{id}/region", post(define_region))
        .route("/sessions/{id}/plan", post(make_plan).put(upload_plan).get(get_plan))
        .route("/sessions/{id}/simulate", post(simulate))
        .route("/sessions/{id}/coverage", get(coverage))
        .route("/sessions/{id}/heatmap", get(heatmap))
        .route("/trials", post(start_trial))
        .route("/trials/{job}", get(trial_status))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

#[derive(Serialize)]
struct SessionStatus {
    id: Uuid,
    mesh: bool,
    region: bool,
    plan: bool,
}

async fn create_session(State(st): State<AppState>) -> Result<Response, ApiError> {
    let id = Uuid::new_v4();
    st.sessions.lock().unwrap().insert(id, SessionHandle::default());
    if let Some(dir) = st.session_dir(id) {
        write_files(&dir, &[])?;
    }
    let body = SessionStatus { id, mesh: false, region: false, plan: false };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn session_status(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStatus>, ApiError> {
    let (uuid, handle) = st.lookup(&id)?;
    let s = handle.lock().await;
    Ok(Json(SessionStatus { id: uuid, mesh: s.surface.is_some(), region: s.region.is_some(), plan: s.plan.is_some() }))
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let (uuid, _guard) = st.lock_for_update(&id)?;
    st.sessions.lock().unwrap().remove(&uuid);
    if let Some(dir) = st.session_dir(uuid) {
        if dir.exists() {
            std::fs::remove_dir_all(&dir)
                .map_err(|e| ApiError::internal(format!("cannot remove {}: {e}", dir.display())))?;
        }
    }
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize)]
struct MeshSummary {
    vertices: usize,
    triangles: usize,
    /// mm²
    area: f64,
    uv_min: Vec2,
    uv_max: Vec2,
    explicit_uv: bool,
}

async fn upload_mesh(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<Json<MeshSummary>, ApiError> {
    let text = String::from_utf8(body.to_vec())
        .map_err(|e| ApiError::malformed(None, format!("mesh is not UTF-8 text: {e}")))?;
    let format = match q.get("format").map(String::as_str) {
        None => MeshFormat::sniff(&text),
        Some(f) if f.eq_ignore_ascii_case("ply") => MeshFormat::Ply,
        Some(f) if f.eq_ignore_ascii_case("obj") => MeshFormat::Obj,
        Some(f) => {
            return Err(ApiError::malformed(
                Some("format".into()),
                format!("unknown mesh format {f:?}; expected ply or obj"),
            ))
        }
    };
    let (uuid, mut guard) = st.lock_for_update(&id)?;
    let surface = blocking(move || parse_mesh(&text, format)).await??;
    st.persist(uuid, &[(MESH_FILE, surface.to_ply_string().as_bytes())])?;
    clear_files(st.session_dir(uuid), &[REGION_FILE, PLAN_FILE, VALIDATION_FILE])?;
    let b = surface.uv_bounds();
    let summary = MeshSummary {
        vertices: surface.vertices().len(),
        triangles: surface.triangles().len(),
        area: surface.area(),
        uv_min: b.min,
        uv_max: b.max,
        explicit_uv: surface.has_explicit_uv(),
    };
    *guard = Session { surface: Some(Arc::new(surface)), region: None, plan: None };
    Ok(Json(summary))
}

#[derive(Serialize)]
struct RegionSummary {
    /// mm²
    operable_area: f64,
    warnings: Vec<RegionWarning>,
}

async fn define_region(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<RegionSummary>, ApiError> {
    let spec: RegionSpec = parse_body(&body)?;
    let (uuid, mut guard) = st.lock_for_update(&id)?;
    let surface = guard.surface.clone().ok_or_else(|| ApiError::missing("mesh"))?;
    let region = blocking(move || spec.build(surface)).await??;
    if !region.is_plannable() {
        return Err(ApiError::zero_operable_area());
    }
    st.persist(uuid, &[(REGION_FILE, artifact_json(&region.spec()).as_bytes())])?;
    clear_files(st.session_dir(uuid), &[PLAN_FILE, VALIDATION_FILE])?;
    let summary = RegionSummary { operable_area: region.operable_area(), warnings: region.warnings().to_vec() };
    guard.region = Some(Arc::new(region));
    guard.plan = None;
    Ok(Json(summary))
}

/// Plan endpoint response; both members use the CLI artifact schemas.
#[derive(Serialize)]
struct PlanResponse<'a> {
    plan: &'a TreatmentPlan,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<&'a ValidationReport>,
}

async fn make_plan(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: PlanRequest = parse_body(&body)?;
    let (uuid, mut guard) = st.lock_for_update(&id)?;
    let region = guard.region.clone().ok_or_else(|| ApiError::missing("region"))?;
    let planned = blocking(move || plan_region(&region, &req)).await??;
    st.persist(
        uuid,
        &[
            (PLAN_FILE, artifact_json(&planned.plan).as_bytes()),
            (VALIDATION_FILE, artifact_json(&planned.validation).as_bytes()),
        ],
    )?;
    let body = json!(PlanResponse { plan: &planned.plan, validation: Some(&planned.validation) });
    guard.plan = Some(Arc::new(planned.plan));
    Ok(Json(body))
}

/// Replaces the session plan with an uploaded plan file, validated against the region.
async fn upload_plan(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let plan: TreatmentPlan = parse_body(&body)?;
    let (uuid, mut guard) = st.lock_for_update(&id)?;
    let region = guard.region.clone().ok_or_else(|| ApiError::missing("region"))?;
    let validation = validate_plan(&plan, &region);
    st.persist(
        uuid,
        &[(PLAN_FILE, artifact_json(&plan).as_bytes()), (VALIDATION_FILE, artifact_json(&validation).as_bytes())],
    )?;
    let body = json!(PlanResponse { plan: &plan, validation: Some(&validation) });
    guard.plan = Some(Arc::new(plan));
    Ok(Json(body))
}

async fn get_plan(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let (_, handle) = st.lookup(&id)?;
    let plan = handle.lock().await.plan.clone().ok_or_else(|| ApiError::missing("plan"))?;
    Ok(Json(json!(PlanResponse { plan: &plan, validation: None })))
}

/// One freehand pass, drawn from stream `stream` of `seed`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    #[serde(default)]
    pub model: OperatorModel,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub laser: LaserSpec,
    #[serde(default = "default_standoff")]
    pub standoff: f64,
}

fn default_standoff() -> f64 {
    PlanRequest::default().standoff
}

async fn simulate(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: SimulateRequest = parse_body(&body)?;
    let (uuid, mut guard) = st.lock_for_update(&id)?;
    let region = guard.region.clone().ok_or_else(|| ApiError::missing("region"))?;
    let plan = blocking(move || {
        simulate_pass(&region, &req.laser, &req.model, req.standoff, RngSeed::new(req.seed, req.stream))
    })
    .await??;
    st.persist(uuid, &[(PLAN_FILE, artifact_json(&plan).as_bytes())])?;
    clear_files(st.session_dir(uuid), &[VALIDATION_FILE])?;
    let body = json!(PlanResponse { plan: &plan, validation: None });
    guard.plan = Some(Arc::new(plan));
    Ok(Json(body))
}

fn pixel_param(q: &HashMap<String, String>) -> Result<f64, ApiError> {
    match q.get("pixel") {
        None => Ok(DEFAULT_PIXEL_SIZE),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::malformed(Some("pixel".into()), format!("pixel must be a number, got {v:?}"))),
    }
}

/// Region and plan of a session, taken without blocking a running mutation for long.
async fn scoring_inputs(
    st: &AppState,
    id: &str,
    q: &HashMap<String, String>,
) -> Result<(Arc<Region>, Arc<TreatmentPlan>, f64), ApiError> {
    let pixel = pixel_param(q)?;
    let (_, handle) = st.lookup(id)?;
    let s = handle.lock().await;
    let region = s.region.clone().ok_or_else(|| ApiError::missing("region"))?;
    let plan = s.plan.clone().ok_or_else(|| ApiError::missing("plan"))?;
    Ok((region, plan, pixel))
}

async fn coverage(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<CoverageReport>, ApiError> {
    let (region, plan, pixel) = scoring_inputs(&st, &id, &q).await?;
    let exec = st.config.execution;
    let report = blocking(move || score_plan(&rasterize(&region, pixel)?, &plan, exec)).await??;
    Ok(Json(report))
}

/// Hit-count layer, little-endian: u32 width, u32 height, f64 pixel size, then
/// width × height u32 counts row-major. Dose is count × the fluence header.
async fn heatmap(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let (region, plan, pixel) = scoring_inputs(&st, &id, &q).await?;
    let exec = st.config.execution;
    let fluence = plan.laser.fluence;
    let bytes = blocking(move || {
        let mask = rasterize(&region, pixel)?;
        dose_map_with_mask(mask, &plan, exec).map(|d| d.heatmap_layer().to_bytes())
    })
    .await??;
    let mut resp = bytes.into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/octet-stream"));
    headers.insert(FLUENCE_HEADER, HeaderValue::from_str(&fluence.to_string()).expect("numeric header value"));
    Ok(resp)
}

#[derive(Serialize)]
struct JobStatus<'a> {
    job: Uuid,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a TrialResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a ErrorBody>,
}

async fn start_trial(State(st): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let config: TrialConfig = parse_body(&body)?;
    config.validate()?;
    let job = Uuid::new_v4();
    st.jobs.lock().unwrap().insert(job, Job::Running);
    let worker = st.clone();
    tokio::spawn(async move {
        let outcome = blocking(move || run_trial(&config)).await.and_then(|r| r.map_err(ApiError::from));
        let state = match outcome {
            Ok(result) => {
                let persisted = match &worker.config.persist_dir {
                    Some(dir) => write_files(
                        &dir.join("trials").join(job.to_string()),
                        &[(TRIAL_JSON_FILE, result.to_json().as_bytes()), (TRIAL_CSV_FILE, result.to_csv().as_bytes())],
                    ),
                    None => Ok(()),
                };
                match persisted {
                    Ok(()) => Job::Done(Arc::new(result)),
                    Err(e) => Job::Failed(e.body),
                }
            }
            Err(e) => Job::Failed(e.body),
        };
        worker.jobs.lock().unwrap().insert(job, state);
    });
    let body = JobStatus { job, status: "running", result: None, error: None };
    Ok((StatusCode::ACCEPTED, Json(json!(body))).into_response())
}

async fn trial_status(State(st): State<AppState>, Path(job): Path<String>) -> Result<Json<Value>, ApiError> {
    let id = Uuid::parse_str(&job).map_err(|_| ApiError::not_found("job", &job))?;
    let state = st.jobs.lock().unwrap().get(&id).cloned().ok_or_else(|| ApiError::not_found("job", &job))?;
    let body = match &state {
        Job::Running => JobStatus { job: id, status: "running", result: None, error: None },
        Job::Done(r) => JobStatus { job: id, status: "done", result: Some(r), error: None },
        Job::Failed(e) => JobStatus { job: id, status: "failed", result: None, error: Some(e) },
    };
    Ok(Json(json!(body)))
}
