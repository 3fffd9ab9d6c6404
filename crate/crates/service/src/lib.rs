//! HTTP API over explanation sessions, versioned under `/v1`.
//!
//! Sessions live in memory and can be saved to and loaded from a session
//! directory. Planning runs as background jobs on a bounded worker pool; a
//! node has at most one job at a time and clients poll `/v1/jobs/{id}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::{Any, CorsLayer};

use xaip_core::compiler::{CompileError, FormalQuestion, Synthesized};
use xaip_core::pddl::{print_model, print_plan};
use xaip_core::planner::{solve_cancellable, OutcomeStatus, PlannerConfig, PlanningOutcome};
use xaip_core::session::{NodeId, Session, SessionError};

pub const PORT_ENV: &str = "XAIP_PORT";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub session_dir: PathBuf,
    /// Planning jobs allowed to run at once.
    pub workers: usize,
    /// Used when a plan request carries no planner.
    pub planner: PlannerConfig,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            session_dir: PathBuf::from("sessions"),
            workers: 2,
            planner: PlannerConfig::from_env(),
            cors_origin: None,
        }
    }
}

/// Error body of every non-2xx response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), code: code.into(), message: message.into(), diagnostic: None }
    }

    fn with(mut self, diagnostic: impl Serialize) -> Self {
        self.diagnostic = serde_json::to_value(diagnostic).ok();
        self
    }

    fn not_found(what: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let msg = e.to_string();
        match e {
            SessionError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", msg),
            SessionError::Parse(p) => ApiError::new(StatusCode::BAD_REQUEST, "parse_error", msg).with(p),
            SessionError::Compile(c) => compile_error(c),
            SessionError::NoPlan(_) => ApiError::new(StatusCode::CONFLICT, "no_plan", msg),
            SessionError::CutInPrefix { .. } | SessionError::IndexRange { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_question", msg)
            }
            SessionError::Version { .. } | SessionError::Corrupt(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_session_file", msg)
            }
            SessionError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", msg),
        }
    }
}

fn compile_error(c: CompileError) -> ApiError {
    let code = match &c {
        CompileError::Window { .. } => "window_bounds",
        CompileError::Vocabulary(_) => "vocabulary",
        CompileError::Cycle => "cycle",
        _ => "invalid_question",
    };
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, c.to_string())
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Cancelled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub session_id: String,
    pub node_id: NodeId,
    pub planner: String,
    pub status: JobStatus,
    #[serde(default)]
    pub outcome: Option<PlanningOutcome>,
}

struct Entry {
    session: Arc<Mutex<Session>>,
    cancel: Arc<AtomicBool>,
}

struct Inner {
    sessions: Mutex<HashMap<String, Entry>>,
    jobs: Mutex<HashMap<String, Job>>,
    /// Running or queued job per node.
    active: Mutex<HashMap<(String, NodeId), String>>,
    pool: Arc<Semaphore>,
    next_job: AtomicU64,
    cfg: ServiceConfig,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        AppState(Arc::new(Inner {
            sessions: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            active: Mutex::new(HashMap::new()),
            pool: Arc::new(Semaphore::new(cfg.workers.max(1))),
            next_job: AtomicU64::new(1),
            cfg,
        }))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        let map = self.0.sessions.lock().unwrap();
        map.get(id).map(|e| e.session.clone()).ok_or_else(|| ApiError::not_found("session"))
    }

    fn insert(&self, s: Session) -> String {
        let id = s.id.clone();
        let entry = Entry { session: Arc::new(Mutex::new(s)), cancel: Arc::new(AtomicBool::new(false)) };
        self.0.sessions.lock().unwrap().insert(id.clone(), entry);
        id
    }

    fn busy(&self, sid: &str, nid: NodeId) -> bool {
        self.0.active.lock().unwrap().contains_key(&(sid.to_string(), nid))
    }
}

/// The `/v1` routes with CORS applied.
pub fn app(state: AppState) -> Router {
    let cors = match &state.0.cfg.cors_origin {
        Some(o) => match o.parse::<HeaderValue>() {
            Ok(v) => CorsLayer::new().allow_origin(v).allow_methods(Any).allow_headers(Any),
            Err(_) => CorsLayer::permissive(),
        },
        None => CorsLayer::permissive(),
    };
    let v1 = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/load", post(load_session))
        .route("/sessions/{sid}", axum::routing::delete(delete_session))
        .route("/sessions/{sid}/tree", get(tree))
        .route("/sessions/{sid}/save", post(save_session))
        .route("/sessions/{sid}/nodes/{nid}/question", post(ask))
        .route("/sessions/{sid}/nodes/{nid}/plan", post(start_plan).get(node_plan))
        .route("/sessions/{sid}/nodes/{nid}/diff", get(diff))
        .route("/sessions/{sid}/nodes/{nid}/model", get(model))
        .route("/jobs/{jid}", get(job));
    Router::new()
        .nest("/v1", v1)
        .fallback(|| async { ApiError::not_found("route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .layer(cors)
        .with_state(state)
}

/// Binds and serves until interrupted.
pub async fn serve(cfg: ServiceConfig) -> std::io::Result<()> {
    std::fs::create_dir_all(&cfg.session_dir)?;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bad address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("xaip service listening on http://{}/v1", listener.local_addr()?);
    axum::serve(listener, app(AppState::new(cfg)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Runs [`serve`] on a fresh multi-threaded runtime.
pub fn run(cfg: ServiceConfig) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()?.block_on(serve(cfg))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes, what: &str) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        let status = if e.is_syntax() || e.is_eof() { StatusCode::BAD_REQUEST } else { StatusCode::UNPROCESSABLE_ENTITY };
        ApiError::new(status, "bad_request", format!("invalid {what}: {e}"))
    })
}

#[derive(Deserialize)]
struct CreateReq {
    domain: String,
    problem: String,
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: CreateReq = parse_body(&body, "session request")?;
    let s = Session::create(&req.domain, &req.problem)?;
    let root = s.root;
    let id = st.insert(s);
    Ok(Json(json!({ "session_id": id, "root": root })))
}

#[derive(Serialize)]
struct NodeView {
    id: NodeId,
    parent: Option<NodeId>,
    kind: Option<&'static str>,
    summary: String,
    status: String,
    makespan: Option<f64>,
    note: String,
}

async fn tree(State(st): State<AppState>, Path(sid): Path<String>) -> ApiResult<Json<Value>> {
    let s = st.session(&sid)?;
    let s = s.lock().unwrap();
    let nodes: Vec<NodeView> = s
        .nodes
        .values()
        .map(|n| NodeView {
            id: n.id,
            parent: n.parent,
            kind: n.question.as_ref().map(|q| q.kind()),
            summary: n.summary(),
            status: if st.busy(&sid, n.id) { "solving".into() } else { n.status() },
            makespan: n.plan.as_ref().filter(|_| n.status() == "solved").map(|p| p.makespan()),
            note: n.note.clone(),
        })
        .collect();
    Ok(Json(json!({ "session_id": sid, "root": s.root, "nodes": nodes })))
}

async fn ask(State(st): State<AppState>, Path((sid, nid)): Path<(String, String)>, body: Bytes) -> ApiResult<Json<Value>> {
    let nid = node_id(&nid)?;
    let s = st.session(&sid)?;
    let mut s = s.lock().unwrap();
    s.node(nid)?;
    let q: FormalQuestion = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_question", format!("ill-formed question: {e}")))?;
    let child = s.ask(nid, &q)?;
    let r = s.node(child)?.hmodel.provenance.last().expect("child has a restriction").clone();
    Ok(Json(json!({
        "node_id": child,
        "kind": r.question.kind(),
        "summary": r.question.to_string(),
        "synthesized": r.symbols,
        "unsolvable": r.unsolvable,
        "notes": r.notes,
    })))
}

async fn start_plan(
    State(st): State<AppState>,
    Path((sid, nid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let nid = node_id(&nid)?;
    let cfg: PlannerConfig =
        if body.iter().all(u8::is_ascii_whitespace) { st.0.cfg.planner.clone() } else { parse_body(&body, "planner config")? };
    cfg.validate().map_err(|m| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_planner", m))?;
    let (session, cancel) = {
        let map = st.0.sessions.lock().unwrap();
        let e = map.get(&sid).ok_or_else(|| ApiError::not_found("session"))?;
        (e.session.clone(), e.cancel.clone())
    };
    session.lock().unwrap().node(nid)?;
    let job_id = format!("j{}", st.0.next_job.fetch_add(1, Ordering::Relaxed));
    {
        let mut active = st.0.active.lock().unwrap();
        if let Some(j) = active.get(&(sid.clone(), nid)) {
            return Err(ApiError::new(StatusCode::CONFLICT, "busy", format!("planning already running on node {nid} (job {j})")));
        }
        active.insert((sid.clone(), nid), job_id.clone());
    }
    let job = Job { job_id: job_id.clone(), session_id: sid.clone(), node_id: nid, planner: cfg.label(), status: JobStatus::Queued, outcome: None };
    st.0.jobs.lock().unwrap().insert(job_id.clone(), job);
    tokio::spawn(run_job(st.clone(), session, cancel, job_id.clone(), sid, nid, cfg));
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id, "status": JobStatus::Queued }))))
}

async fn run_job(
    st: AppState,
    session: Arc<Mutex<Session>>,
    cancel: Arc<AtomicBool>,
    job_id: String,
    sid: String,
    nid: NodeId,
    cfg: PlannerConfig,
) {
    let set = |status: JobStatus, outcome: Option<PlanningOutcome>| {
        if let Some(j) = st.0.jobs.lock().unwrap().get_mut(&job_id) {
            j.status = status;
            if outcome.is_some() {
                j.outcome = outcome;
            }
        }
    };
    let permit = st.0.pool.clone().acquire_owned().await;
    let model = session.lock().unwrap().node(nid).map(|n| n.hmodel.model.clone());
    match (permit, model) {
        (Ok(_permit), Ok(model)) if !cancel.load(Ordering::Relaxed) => {
            set(JobStatus::Running, None);
            let flag = cancel.clone();
            let label = cfg.label();
            let out = tokio::task::spawn_blocking(move || solve_cancellable(&model, &cfg, &flag)).await;
            match out {
                Ok(outcome) if !cancel.load(Ordering::Relaxed) => {
                    let recorded = session.lock().unwrap().record_outcome(nid, outcome.clone());
                    let mut outcome = outcome;
                    if let Err(e) = recorded {
                        outcome.log.push_str(&format!("could not record the outcome: {e}\n"));
                    }
                    set(JobStatus::Done, Some(outcome));
                }
                Ok(outcome) => set(JobStatus::Cancelled, Some(outcome)),
                Err(e) => {
                    let outcome = PlanningOutcome {
                        status: OutcomeStatus::PlannerError,
                        plans: Vec::new(),
                        wall_time: 0.0,
                        planner: label,
                        stats: None,
                        log: format!("planner task failed: {e}\n"),
                    };
                    set(JobStatus::Done, Some(outcome));
                }
            }
        }
        _ => set(JobStatus::Cancelled, None),
    }
    st.0.active.lock().unwrap().remove(&(sid, nid));
}

async fn job(State(st): State<AppState>, Path(jid): Path<String>) -> ApiResult<Json<Job>> {
    st.0.jobs.lock().unwrap().get(&jid).cloned().map(Json).ok_or_else(|| ApiError::not_found("job"))
}

async fn node_plan(State(st): State<AppState>, Path((sid, nid)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let nid = node_id(&nid)?;
    let s = st.session(&sid)?;
    let s = s.lock().unwrap();
    let n = s.node(nid)?;
    Ok(Json(json!({
        "node_id": nid,
        "status": if st.busy(&sid, nid) { "solving".into() } else { n.status() },
        "plan_text": n.plan.as_ref().map(print_plan),
        "plan": n.plan,
        "hplan_text": n.hplan.as_ref().map(print_plan),
        "report": n.report,
        "checks": n.checks,
        "outcome": n.outcome.as_ref().map(|o| json!({
            "status": o.status,
            "planner": o.planner,
            "wall_time": o.wall_time,
            "plans_found": o.plans.len(),
            "log": o.log,
        })),
    })))
}

#[derive(Deserialize)]
struct DiffQuery {
    against: Option<String>,
}

fn node_id(s: &str) -> ApiResult<NodeId> {
    s.parse().map_err(|_| ApiError::not_found("node"))
}

async fn diff(
    State(st): State<AppState>,
    Path((sid, nid)): Path<(String, String)>,
    q: Result<Query<DiffQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Json<Value>> {
    let nid = node_id(&nid)?;
    let s = st.session(&sid)?;
    let s = s.lock().unwrap();
    let Query(q) = q.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    let against = q.against.as_deref().map(node_id).transpose()?;
    let d = s.diff(nid, against)?;
    Ok(Json(serde_json::to_value(d).expect("diff serializes")))
}

async fn model(State(st): State<AppState>, Path((sid, nid)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let nid = node_id(&nid)?;
    let s = st.session(&sid)?;
    let s = s.lock().unwrap();
    let n = s.node(nid)?;
    let (domain, problem) = print_model(&n.hmodel.model);
    let mut synthesized = Synthesized::default();
    for r in &n.hmodel.provenance {
        synthesized.predicates.extend(r.symbols.predicates.iter().cloned());
        synthesized.operators.extend(r.symbols.operators.iter().cloned());
    }
    Ok(Json(json!({ "node_id": nid, "domain": domain, "problem": problem, "synthesized": synthesized })))
}

fn session_file(st: &AppState, id: &str) -> ApiResult<PathBuf> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "bad_request", format!("invalid session id `{id}`")));
    }
    Ok(st.0.cfg.session_dir.join(format!("{id}.json")))
}

async fn save_session(State(st): State<AppState>, Path(sid): Path<String>) -> ApiResult<Json<Value>> {
    let path = session_file(&st, &sid)?;
    let s = st.session(&sid)?;
    let text = s.lock().unwrap().to_json();
    std::fs::create_dir_all(&st.0.cfg.session_dir)
        .and_then(|_| std::fs::write(&path, text))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", e.to_string()))?;
    Ok(Json(json!({ "session_id": sid, "path": path.display().to_string() })))
}

#[derive(Deserialize)]
struct LoadReq {
    session_id: String,
}

async fn load_session(State(st): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: LoadReq = parse_body(&body, "load request")?;
    let path = session_file(&st, &req.session_id)?;
    if !path.exists() {
        return Err(ApiError::not_found("saved session"));
    }
    let s = Session::load(&path)?;
    let busy = st.0.active.lock().unwrap().keys().any(|(sid, _)| *sid == s.id);
    if busy {
        return Err(ApiError::new(StatusCode::CONFLICT, "busy", "the session has planning jobs running"));
    }
    let root = s.root;
    let nodes = s.nodes.len();
    let id = st.insert(s);
    Ok(Json(json!({ "session_id": id, "root": root, "nodes": nodes })))
}

async fn delete_session(State(st): State<AppState>, Path(sid): Path<String>) -> ApiResult<StatusCode> {
    let e = st.0.sessions.lock().unwrap().remove(&sid).ok_or_else(|| ApiError::not_found("session"))?;
    e.cancel.store(true, Ordering::Relaxed);
    Ok(StatusCode::NO_CONTENT)
}
