//! Single-session JSON API backing the interactive tuner.
//!
//! Vertex ids on the wire are 1-based. Session state sits behind one
//! read-write lock; long GMM fits run on the blocking pool as cancellable
//! jobs.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mlbn_core::gmm::{estimate_gmm, EmOptions, GmmOptions, MixtureFit, DEFAULT_WEIGHT_FLOOR};
use mlbn_core::network::{atom_set, edge_occupancy, WeightedDag, INACTIVATION_THRESHOLD};
use mlbn_core::qp::{auto_tune, default_schedule, default_threshold, solve_pair_1d, QpSolution, TuneResult};
use mlbn_core::report::{EstimateMethod, EstimateReport};
use mlbn_core::simulate::SampleSet;
use mlbn_core::Error as CoreError;

use crate::error::AppError;

/// Upper bound on points returned by `/api/marginal`.
pub const MAX_MARGINAL_POINTS: usize = 20_000;
const DEFAULT_BINS: usize = 60;
const LEDGER_FILE: &str = "ledger.json";

// ---------------------------------------------------------------- errors

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match e {
            CoreError::SamePair(_)
            | CoreError::VertexOutOfRange { .. }
            | CoreError::Config(_)
            | CoreError::UnboundedTuning => StatusCode::BAD_REQUEST,
            CoreError::Cancelled => StatusCode::CONFLICT,
            CoreError::NoComponentAboveFloor { .. }
            | CoreError::DegenerateNoise
            | CoreError::MissingProvenance
            | CoreError::EmptySamples => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

// ---------------------------------------------------------------- state

/// Latest solve for one pair.
#[derive(Clone, Debug)]
enum LastSolve {
    Qp(QpSolution),
    Gmm(EstimateReport),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub sequence: usize,
    pub i: usize,
    pub j: usize,
    pub omega: f64,
    pub method: EstimateMethod,
    /// Estimate of the solve the entry was accepted from.
    pub solved_estimate: f64,
    #[serde(rename = "K1", skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(rename = "K2", skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct LedgerFile {
    graph_hash: Option<String>,
    entries: Vec<LedgerEntry>,
}

#[derive(Default)]
pub struct Session {
    graph: Option<Arc<WeightedDag>>,
    samples: Option<Arc<SampleSet>>,
    /// Keyed by 0-based pair.
    solves: HashMap<(usize, usize), LastSolve>,
    ledger: Vec<LedgerEntry>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
    Cancelled,
}

struct Job {
    cancel: Arc<AtomicBool>,
    status: JobStatus,
    result: Option<Value>,
    error: Option<String>,
}

pub struct AppState {
    session: RwLock<Session>,
    jobs: Mutex<BTreeMap<u64, Job>>,
    next_job: Mutex<u64>,
    ledger_path: Option<PathBuf>,
}

impl AppState {
    /// Builds the session; an existing ledger for the same graph is resumed.
    pub fn new(
        graph: Option<WeightedDag>,
        samples: Option<SampleSet>,
        session_root: Option<PathBuf>,
    ) -> Result<Arc<Self>, AppError> {
        if let (Some(g), Some(s)) = (&graph, &samples) {
            s.verify_graph(g)?;
        }
        let ledger_path = session_root.map(|r| r.join(LEDGER_FILE));
        let hash = graph.as_ref().map(|g| g.graph_hash());
        let ledger = match &ledger_path {
            Some(p) if p.exists() => {
                let text = std::fs::read_to_string(p).map_err(|source| AppError::Read { path: p.clone(), source })?;
                let file: LedgerFile =
                    serde_json::from_str(&text).map_err(|source| AppError::Json { path: p.clone(), source })?;
                if file.graph_hash == hash {
                    file.entries
                } else {
                    tracing::warn!(path = %p.display(), "ledger belongs to another graph; starting a new one");
                    Vec::new()
                }
            }
            _ => Vec::new(),
        };
        Ok(Arc::new(AppState {
            session: RwLock::new(Session {
                graph: graph.map(Arc::new),
                samples: samples.map(Arc::new),
                solves: HashMap::new(),
                ledger,
            }),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: Mutex::new(1),
            ledger_path,
        }))
    }

    fn graph(&self) -> Result<Arc<WeightedDag>, ApiError> {
        self.session.read().expect("session lock").graph.clone().ok_or_else(|| ApiError::not_found("no graph loaded"))
    }

    fn samples(&self) -> Result<Arc<SampleSet>, ApiError> {
        self.session
            .read()
            .expect("session lock")
            .samples
            .clone()
            .ok_or_else(|| ApiError::not_found("no dataset loaded"))
    }

    fn write_ledger(&self, session: &Session) -> Result<(), ApiError> {
        let Some(path) = &self.ledger_path else { return Ok(()) };
        let file = LedgerFile {
            graph_hash: session.graph.as_ref().map(|g| g.graph_hash()),
            entries: session.ledger.clone(),
        };
        write_atomic(path, &serde_json::to_string_pretty(&file).expect("ledger serializes"))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("writing ledger: {e}")))
    }
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(tmp, path)
}

// ---------------------------------------------------------------- pairs

/// Validates a 1-based pair against `n` vertices and returns it 0-based.
fn pair(i: Option<i64>, j: Option<i64>, n: usize) -> Result<(usize, usize), ApiError> {
    let (Some(i), Some(j)) = (i, j) else {
        return Err(ApiError::bad_request("both vertices of the pair are required"));
    };
    for v in [i, j] {
        if v < 1 || v as usize > n {
            return Err(ApiError::bad_request(format!("vertex {v} outside 1..={n}")));
        }
    }
    if i == j {
        return Err(ApiError::bad_request(format!("pair ({i}, {j}) repeats a vertex")));
    }
    Ok((i as usize - 1, j as usize - 1))
}

/// Syntax-only check used before the dataset is known.
fn pair_syntax(i: Option<i64>, j: Option<i64>) -> Result<(), ApiError> {
    pair(i, j, usize::MAX >> 1).map(|_| ())
}

// ---------------------------------------------------------------- handlers

async fn get_graph(State(st): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let g = st.graph()?;
    Ok(Json(serde_json::to_value(&*g).expect("graph serializes")).into_response())
}

#[derive(Deserialize)]
pub struct PairQuery {
    i: Option<i64>,
    j: Option<i64>,
}

async fn get_atoms(
    State(st): State<Arc<AppState>>,
    q: Result<Query<PairQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = q?;
    pair_syntax(q.i, q.j)?;
    let g = st.graph()?;
    let (i, j) = pair(q.i, q.j, g.n())?;
    let atoms = atom_set(&g, &g.kleene_star(), i, j)?;
    Ok(Json(atoms).into_response())
}

#[derive(Deserialize)]
pub struct MarginalQuery {
    i: Option<i64>,
    j: Option<i64>,
    k: Option<i64>,
    l: Option<i64>,
    bins: Option<usize>,
}

#[derive(Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

fn histogram(values: &[f64], bins: usize) -> Histogram {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Serialize)]
pub struct Marginal {
    pub i: usize,
    pub j: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub n_samples: usize,
    /// Every `stride`-th row starting at row 0.
    pub stride: usize,
    pub rows: Vec<usize>,
    pub y_ij: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_kl: Option<Vec<f64>>,
    /// Histograms over all rows, not just the returned ones.
    pub hist_ij: Histogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hist_kl: Option<Histogram>,
}

async fn get_marginal(
    State(st): State<Arc<AppState>>,
    q: Result<Query<MarginalQuery>, QueryRejection>,
) -> ApiResult<Marginal> {
    let Query(q) = q?;
    pair_syntax(q.i, q.j)?;
    let second = q.k.is_some() || q.l.is_some();
    if second {
        pair_syntax(q.k, q.l)?;
    }
    let bins = q.bins.unwrap_or(DEFAULT_BINS);
    if bins == 0 || bins > 10_000 {
        return Err(ApiError::bad_request("bins must lie in 1..=10000"));
    }
    let s = st.samples()?;
    let n = s.n_vertices();
    let (i, j) = pair(q.i, q.j, n)?;
    let kl = if second { Some(pair(q.k, q.l, n)?) } else { None };
    let y = s.differences(i, j)?.values;
    let z = kl.map(|(k, l)| s.differences(k, l).map(|d| d.values)).transpose()?;
    let total = s.n_samples();
    let stride = total.div_ceil(MAX_MARGINAL_POINTS).max(1);
    let rows: Vec<usize> = (0..total).step_by(stride).collect();
    Ok(Json(Marginal {
        i: i + 1,
        j: j + 1,
        k: kl.map(|p| p.0 + 1),
        l: kl.map(|p| p.1 + 1),
        n_samples: total,
        stride,
        y_ij: rows.iter().map(|&r| y[r]).collect(),
        y_kl: z.as_ref().map(|z| rows.iter().map(|&r| z[r]).collect()),
        hist_ij: histogram(&y, bins),
        hist_kl: z.as_ref().map(|z| histogram(z, bins)),
        rows,
    }))
}

#[derive(Deserialize)]
pub struct QpRequest {
    i: Option<i64>,
    j: Option<i64>,
    #[serde(rename = "K1")]
    k1: Option<f64>,
    #[serde(rename = "K2")]
    k2: Option<f64>,
    /// Run the default schedule instead of a fixed `(K1, K2)`.
    #[serde(default)]
    auto: bool,
    t: Option<f64>,
    /// Include the per-sample slacks in the response.
    #[serde(default)]
    deltas: bool,
}

#[derive(Serialize)]
#[serde(untagged)]
pub enum QpResponse {
    Fixed(QpSolution),
    Auto(TuneResult),
}

async fn post_qp(
    State(st): State<Arc<AppState>>,
    body: Result<Json<QpRequest>, JsonRejection>,
) -> ApiResult<QpResponse> {
    let Json(req) = body?;
    pair_syntax(req.i, req.j)?;
    if !req.auto && (req.k1.is_none() || req.k2.is_none()) {
        return Err(ApiError::bad_request("K1 and K2 are required unless auto is set"));
    }
    let s = st.samples()?;
    let (i, j) = pair(req.i, req.j, s.n_vertices())?;
    let y = s.differences(i, j)?;
    let (mut solution, auto) = if req.auto {
        let t = req.t.unwrap_or_else(|| default_threshold(&y));
        let r = auto_tune(&y, t, &default_schedule())?;
        let sol = r.solution.clone().ok_or_else(|| ApiError::bad_request("empty tuning schedule"))?;
        (sol, Some(r))
    } else {
        (solve_pair_1d(&y, req.k1.unwrap_or_default(), req.k2.unwrap_or_default())?, None)
    };
    st.session.write().expect("session lock").solves.insert((i, j), LastSolve::Qp(solution.clone()));
    if !req.deltas {
        solution.deltas.clear();
    }
    Ok(Json(match auto {
        Some(mut r) => {
            r.solution = Some(solution);
            QpResponse::Auto(r)
        }
        None => QpResponse::Fixed(solution),
    }))
}

#[derive(Clone, Deserialize)]
pub struct GmmRequest {
    i: Option<i64>,
    j: Option<i64>,
    kmax: Option<usize>,
    #[serde(default)]
    seed: u64,
    floor: Option<f64>,
}

#[derive(Serialize)]
pub struct GmmResponse {
    pub fit: MixtureFit,
    pub report: EstimateReport,
}

/// Everything a GMM fit needs, captured before leaving the request.
struct GmmTask {
    pair: (usize, usize),
    samples: Arc<SampleSet>,
    graph: Option<Arc<WeightedDag>>,
    opts: GmmOptions,
}

fn prepare_gmm(st: &AppState, req: &GmmRequest, cancel: Option<Arc<AtomicBool>>) -> Result<GmmTask, ApiError> {
    pair_syntax(req.i, req.j)?;
    let samples = st.samples()?;
    let pair = pair(req.i, req.j, samples.n_vertices())?;
    let graph = st.session.read().expect("session lock").graph.clone();
    let opts = GmmOptions {
        k_max: req.kmax,
        weight_floor: req.floor.unwrap_or(DEFAULT_WEIGHT_FLOOR),
        em: EmOptions { seed: req.seed, cancel, ..EmOptions::default() },
    };
    Ok(GmmTask { pair, samples, graph, opts })
}

fn run_gmm(task: &GmmTask) -> Result<GmmResponse, CoreError> {
    let (i, j) = task.pair;
    let y = task.samples.differences(i, j)?;
    let (mut report, fit) = estimate_gmm(&y, task.graph.as_deref(), &task.opts)?;
    if let Some(g) = &task.graph {
        if g.weight(i, j).is_some() && task.samples.provenance().is_some() {
            let occ = edge_occupancy(g, &task.samples)?;
            if let Some(o) = occ.iter().find(|o| o.source == i && o.target == j) {
                report = report.with_occupancy(o.fraction, INACTIVATION_THRESHOLD);
            }
        }
    }
    Ok(GmmResponse { fit, report })
}

fn record_gmm(st: &AppState, pair: (usize, usize), r: &GmmResponse) {
    st.session.write().expect("session lock").solves.insert(pair, LastSolve::Gmm(r.report.clone()));
}

async fn post_gmm(
    State(st): State<Arc<AppState>>,
    body: Result<Json<GmmRequest>, JsonRejection>,
) -> ApiResult<GmmResponse> {
    let Json(req) = body?;
    let task = prepare_gmm(&st, &req, None)?;
    let pair = task.pair;
    let r = tokio::task::spawn_blocking(move || run_gmm(&task))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    record_gmm(&st, pair, &r);
    Ok(Json(r))
}

#[derive(Serialize)]
pub struct JobView {
    pub id: u64,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn view(id: u64, job: &Job) -> JobView {
    JobView { id, status: job.status.clone(), result: job.result.clone(), error: job.error.clone() }
}

async fn start_gmm_job(
    State(st): State<Arc<AppState>>,
    body: Result<Json<GmmRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JobView>), ApiError> {
    let Json(req) = body?;
    let cancel = Arc::new(AtomicBool::new(false));
    let task = prepare_gmm(&st, &req, Some(cancel.clone()))?;
    let id = {
        let mut next = st.next_job.lock().expect("job counter");
        let id = *next;
        *next += 1;
        id
    };
    let job = Job { cancel, status: JobStatus::Running, result: None, error: None };
    let v = view(id, &job);
    st.jobs.lock().expect("jobs lock").insert(id, job);
    let worker = st.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = run_gmm(&task);
        if let Ok(r) = &outcome {
            record_gmm(&worker, task.pair, r);
        }
        let mut jobs = worker.jobs.lock().expect("jobs lock");
        if let Some(job) = jobs.get_mut(&id) {
            match outcome {
                Ok(r) => {
                    job.status = JobStatus::Done;
                    job.result = Some(serde_json::to_value(r).expect("fit serializes"));
                }
                Err(CoreError::Cancelled) => job.status = JobStatus::Cancelled,
                Err(e) => {
                    job.status = JobStatus::Failed;
                    job.error = Some(e.to_string());
                }
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(v)))
}

async fn get_gmm_job(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> ApiResult<JobView> {
    let jobs = st.jobs.lock().expect("jobs lock");
    let job = jobs.get(&id).ok_or_else(|| ApiError::not_found(format!("no job {id}")))?;
    Ok(Json(view(id, job)))
}

async fn cancel_gmm_job(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> ApiResult<JobView> {
    let jobs = st.jobs.lock().expect("jobs lock");
    let job = jobs.get(&id).ok_or_else(|| ApiError::not_found(format!("no job {id}")))?;
    job.cancel.store(true, Ordering::Relaxed);
    Ok(Json(view(id, job)))
}

#[derive(Deserialize)]
pub struct AcceptRequest {
    i: Option<i64>,
    j: Option<i64>,
    /// Defaults to the estimate of the latest solve.
    omega: Option<f64>,
}

async fn post_accept(
    State(st): State<Arc<AppState>>,
    body: Result<Json<AcceptRequest>, JsonRejection>,
) -> ApiResult<LedgerEntry> {
    let Json(req) = body?;
    pair_syntax(req.i, req.j)?;
    if req.omega.is_some_and(|w| !w.is_finite()) {
        return Err(ApiError::bad_request("omega must be finite"));
    }
    let s = st.samples()?;
    let (i, j) = pair(req.i, req.j, s.n_vertices())?;
    let mut session = st.session.write().expect("session lock");
    let solve = session.solves.get(&(i, j)).cloned().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, format!("no solve for pair ({}, {}) yet", i + 1, j + 1))
    })?;
    let (method, solved, k1, k2, n_samples) = match &solve {
        LastSolve::Qp(q) => (EstimateMethod::Qp, q.omega_hat, Some(q.k1), Some(q.k2), s.n_samples()),
        LastSolve::Gmm(r) => (EstimateMethod::Gmm, r.estimate, None, None, r.diagnostics.n_samples),
    };
    let entry = LedgerEntry {
        sequence: session.ledger.len() + 1,
        i: i + 1,
        j: j + 1,
        omega: req.omega.unwrap_or(solved),
        method,
        solved_estimate: solved,
        k1,
        k2,
        n_samples,
    };
    session.ledger.push(entry.clone());
    st.write_ledger(&session)?;
    Ok(Json(entry))
}

#[derive(Serialize)]
pub struct Report {
    pub entries: Vec<LedgerEntry>,
    /// Latest accepted value per pair, keyed `"i,j"`.
    pub estimates: BTreeMap<String, f64>,
}

async fn get_report(State(st): State<Arc<AppState>>) -> Json<Report> {
    let session = st.session.read().expect("session lock");
    let estimates = session.ledger.iter().map(|e| (format!("{},{}", e.i, e.j), e.omega)).collect();
    Json(Report { entries: session.ledger.clone(), estimates })
}

/// The API routes, plus static files from `static_dir` when given.
pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/graph", get(get_graph))
        .route("/api/marginal", get(get_marginal))
        .route("/api/atoms", get(get_atoms))
        .route("/api/qp", post(post_qp))
        .route("/api/gmm", post(post_gmm))
        .route("/api/gmm/jobs", post(start_gmm_job))
        .route("/api/gmm/jobs/{id}", get(get_gmm_job).delete(cancel_gmm_job))
        .route("/api/accept", post(post_accept))
        .route("/api/report", get(get_report))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let app = router(state, static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_every_value() {
        let h = histogram(&[0.0, 0.5, 1.0, 1.0], 2);
        assert_eq!(h.counts, vec![1, 3]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
        let flat = histogram(&[2.0, 2.0], 4);
        assert_eq!(flat.counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn pair_validation() {
        assert_eq!(pair(Some(2), Some(4), 4).unwrap(), (1, 3));
        assert!(pair(Some(0), Some(4), 4).is_err());
        assert!(pair(Some(2), Some(2), 4).is_err());
        assert!(pair(Some(2), Some(5), 4).is_err());
        assert!(pair(None, Some(1), 4).is_err());
    }
}
