//! HTTP/JSON service over jobs, live progress, results, traces, coverage
//! and marks.
//!
//! All store mutations go through one writer task that applies them in
//! order and saves the store after each batch. Scheduler outcomes are
//! processed on a dispatcher thread and handed to the writer the same way.
//! Errors use the envelope `{"code", "message"}`.

pub mod store;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use forge_core::job::{self, JobConfig, PreparedJob, TaskResult};
use forge_core::miniver::VerdictKind;
use forge_core::results::{self, Denominator, MarkDraft, MarkError, Signature, TaskCoverage, VerdictClass};
use forge_core::sched::{
    JobSpec, JobState, MiniverBackend, Progress, ResourceLimits, Scheduler, SchedulerHandle, Speculation, TaskRef,
    TaskStatus,
};
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};
use store::{digest, task_key, Access, JobRecord, ResultRecord, StoreData};
use tokio::sync::{mpsc, oneshot, watch};

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 1000;
/// Longest long-poll a client may request, in seconds.
pub const MAX_WAIT: f64 = 60.0;
const JOB_FILE: &str = "job.json";
const PREPARED_FILE: &str = "prepared.json";

type Op = Box<dyn FnOnce(&mut StoreData) + Send>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.into(),
        }
    }

    fn conflict(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::CONFLICT,
            code: "conflict",
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

impl From<MarkError> for ApiError {
    fn from(e: MarkError) -> Self {
        match e {
            MarkError::UnknownMark(_) | MarkError::UnknownTask(_) => ApiError::not_found(e.to_string()),
            MarkError::EmptySignature => ApiError::bad_request(e.to_string()),
            MarkError::DuplicateManual(..) => ApiError::conflict(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn query_num<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str, default: T) -> ApiResult<T> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::bad_request(format!("query parameter `{key}` is not a valid number"))),
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct Inner {
    data: Arc<RwLock<StoreData>>,
    ops: mpsc::UnboundedSender<Op>,
    version: watch::Receiver<u64>,
    prepared: Arc<Mutex<HashMap<String, Arc<PreparedJob>>>>,
    sched: SchedulerHandle,
    store_dir: PathBuf,
}

#[derive(Clone)]
struct App(Arc<Inner>);

impl App {
    /// Apply `f` on the writer and return its result.
    async fn write<T: Send + 'static>(&self, f: impl FnOnce(&mut StoreData) -> T + Send + 'static) -> ApiResult<T> {
        let (tx, rx) = oneshot::channel();
        self.0
            .ops
            .send(Box::new(move |d| {
                let _ = tx.send(f(d));
            }))
            .map_err(|_| ApiError::internal("store writer stopped"))?;
        rx.await.map_err(|_| ApiError::internal("store writer stopped"))
    }

    fn read<T>(&self, f: impl FnOnce(&StoreData) -> T) -> T {
        f(&self.0.data.read().unwrap())
    }

    fn job_dir(&self, id: &str) -> PathBuf {
        self.0.store_dir.join("jobs").join(id)
    }

    fn prepared(&self, id: &str) -> ApiResult<Arc<PreparedJob>> {
        if let Some(p) = self.0.prepared.lock().unwrap().get(id) {
            return Ok(p.clone());
        }
        let path = self.job_dir(id).join(PREPARED_FILE);
        let text = std::fs::read_to_string(&path).map_err(|_| ApiError::not_found(format!("no job {id}")))?;
        let p: PreparedJob = serde_json::from_str(&text).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
        let p = Arc::new(p);
        self.0.prepared.lock().unwrap().insert(id.to_string(), p.clone());
        Ok(p)
    }

    fn job(&self, id: &str) -> ApiResult<JobRecord> {
        self.read(|d| d.jobs.get(id).cloned()).ok_or_else(|| ApiError::not_found(format!("no job {id}")))
    }
}

/// Prepare the tasks of a job from configuration text, on a blocking thread.
async fn prepare_job(app: &App, id: &str, text: String, root: PathBuf, priority: Option<i64>) -> ApiResult<PreparedJob> {
    let mut conf: JobConfig =
        serde_json::from_str(&text).map_err(|e| ApiError::bad_request(format!("invalid job configuration: {e}")))?;
    conf.id = Some(id.to_string());
    let workdir = app.job_dir(id);
    conf.workdir = Some(workdir.clone());
    if let Some(p) = priority {
        conf.priority = p;
    }
    tokio::task::spawn_blocking(move || {
        let _ = std::fs::remove_dir_all(workdir.join("tasks"));
        let prepared = job::prepare(&conf, &root).map_err(|e| ApiError::bad_request(format!("job preparation failed: {e}")))?;
        std::fs::create_dir_all(&workdir).map_err(|e| ApiError::internal(e.to_string()))?;
        let text = serde_json::to_string(&prepared).map_err(|e| ApiError::internal(e.to_string()))?;
        std::fs::write(workdir.join(PREPARED_FILE), text).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(prepared)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

fn apply_result(d: &mut StoreData, job: &str, result: TaskResult) {
    let list = d.results.entry(job.to_string()).or_default();
    if list.iter().any(|r| r.result.task == result.task) {
        return;
    }
    let id = task_key(job, &result.task);
    let failing = result
        .verdict
        .as_ref()
        .is_some_and(|v| matches!(v.kind, VerdictKind::Unsafe | VerdictKind::Unknown));
    if let (true, Some(sig)) = (failing, result.signature.clone()) {
        d.marks.add_task(&id, sig);
    }
    list.push(ResultRecord {
        seq: list.len(),
        id,
        result,
    });
    let solved = list.len();
    if let Some(rec) = d.jobs.get_mut(job) {
        if rec.state == JobState::Running && solved >= rec.task_total {
            rec.state = JobState::Done;
        }
    }
}

fn spawn_writer(data: Arc<RwLock<StoreData>>, dir: PathBuf, mut ops: mpsc::UnboundedReceiver<Op>, version: watch::Sender<u64>) {
    tokio::spawn(async move {
        while let Some(op) = ops.recv().await {
            {
                let mut d = data.write().unwrap();
                op(&mut d);
                while let Ok(op) = ops.try_recv() {
                    op(&mut d);
                }
                if let Err(e) = d.save(&dir) {
                    eprintln!("forge serve: saving store failed: {e}");
                }
            }
            version.send_modify(|v| *v += 1);
        }
    });
}

fn spawn_dispatcher(
    scheduler: Scheduler,
    prepared: Arc<Mutex<HashMap<String, Arc<PreparedJob>>>>,
    ops: mpsc::UnboundedSender<Op>,
) {
    std::thread::spawn(move || {
        while let Ok(outcome) = scheduler.outcomes().recv() {
            let Some(job) = prepared.lock().unwrap().get(&outcome.job).cloned() else {
                continue;
            };
            let Some(task) = job.tasks.iter().find(|t| t.task.id == outcome.task) else {
                continue;
            };
            let result = job::process_outcome(task, &outcome);
            let id = outcome.job.clone();
            if ops.send(Box::new(move |d| apply_result(d, &id, result))).is_err() {
                break;
            }
        }
    });
}

/// Build the service router over a store directory. Must be called inside a
/// tokio runtime.
pub async fn router(store_dir: &Path, workers: usize) -> std::io::Result<Router> {
    std::fs::create_dir_all(store_dir)?;
    let store_dir = store_dir.canonicalize()?;
    let mut data = StoreData::load(&store_dir)?;
    for rec in data.jobs.values_mut() {
        if rec.state == JobState::Running {
            rec.state = JobState::Cancelled;
            rec.error = Some("interrupted by service restart".into());
        }
    }
    let data = Arc::new(RwLock::new(data));
    let (ops, ops_rx) = mpsc::unbounded_channel();
    let (version_tx, version) = watch::channel(0u64);
    spawn_writer(data.clone(), store_dir.clone(), ops_rx, version_tx);
    let scheduler = Scheduler::new(Arc::new(MiniverBackend::default()), workers, Speculation::default());
    let sched = scheduler.handle();
    let prepared = Arc::new(Mutex::new(HashMap::new()));
    spawn_dispatcher(scheduler, prepared.clone(), ops.clone());
    let app = App(Arc::new(Inner {
        data,
        ops,
        version,
        prepared,
        sched,
        store_dir,
    }));
    Ok(Router::new()
        .route("/jobs", post(create_job).get(list_jobs))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/files/{name}", put(put_file))
        .route("/jobs/{id}/start", post(start_job))
        .route("/jobs/{id}/cancel", post(cancel_job))
        .route("/jobs/{id}/progress", get(job_progress))
        .route("/jobs/{id}/results", get(job_results))
        .route("/jobs/{id}/coverage", get(job_coverage))
        .route("/jobs/{id}/source", get(job_source))
        .route("/jobs/{a}/diff/{b}", get(job_diff))
        .route("/tasks/{id}/trace", get(task_trace))
        .route("/marks", post(create_mark).get(list_marks))
        .route("/marks/{id}", get(get_mark).put(update_mark))
        .route("/marks/{id}/associations", get(mark_associations))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(app))
}

/// Serve on `0.0.0.0:port` until the process ends.
pub async fn serve(store_dir: &Path, port: u16) -> std::io::Result<()> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let app = router(store_dir, workers).await?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, app).await
}

// ---- jobs ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateJob {
    name: Option<String>,
    job_file: Option<PathBuf>,
    clone_of: Option<String>,
    #[serde(default)]
    author: String,
    #[serde(default)]
    access: Access,
    priority: Option<i64>,
}

fn statistics_of(d: &StoreData, job: &str) -> Value {
    let list = d.results.get(job).map(Vec::as_slice).unwrap_or(&[]);
    let classes = d.marks.task_classes();
    let verdicts: Vec<_> = list.iter().filter_map(|r| r.result.verdict.clone()).collect();
    let assessed: Vec<VerdictClass> = list.iter().filter_map(|r| classes.get(&r.id).copied()).collect();
    json!(results::verdict_statistics(&verdicts, &assessed))
}

fn job_view(d: &StoreData, rec: &JobRecord) -> Value {
    let mut v = json!(rec);
    let solved = d.results.get(&rec.id).map_or(0, Vec::len);
    v["solved"] = json!(solved);
    v["statistics"] = statistics_of(d, &rec.id);
    v
}

async fn create_job(State(app): State<App>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateJob = parse_body(&body)?;
    let (text, root, base_name, base_priority) = match (&req.job_file, &req.clone_of) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ApiError::bad_request(format!("cannot read {}: {e}", path.display())))?;
            let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let root = root.canonicalize().unwrap_or(root);
            (text, root, None, None)
        }
        (None, Some(src)) => {
            let rec = app.job(src)?;
            let text = rec.files.get(JOB_FILE).cloned().unwrap_or_default();
            (text, rec.root, Some(format!("{} (copy)", rec.name)), Some(rec.priority))
        }
        _ => return Err(ApiError::bad_request("exactly one of `job_file` and `clone_of` is required")),
    };
    let (id, seq) = app
        .write(|d| {
            d.next_job += 1;
            (format!("j{}", d.next_job), d.next_job)
        })
        .await?;
    let prepared = prepare_job(&app, &id, text.clone(), root.clone(), req.priority.or(base_priority)).await?;
    let rec = JobRecord {
        id: id.clone(),
        seq,
        name: req.name.or(base_name).unwrap_or_else(|| prepared.name.clone()),
        author: req.author,
        access: req.access,
        created_at: now(),
        priority: prepared.priority,
        state: JobState::Pending,
        root,
        files: BTreeMap::from([(JOB_FILE.to_string(), text)]),
        files_version: 1,
        sources: prepared.files.iter().map(|(k, v)| (k.clone(), digest(v))).collect(),
        task_total: prepared.tasks.len(),
        started_at: None,
        error: None,
        warnings: prepared.warnings.clone(),
    };
    app.0.prepared.lock().unwrap().insert(id.clone(), Arc::new(prepared));
    let view = app
        .write(move |d| {
            d.jobs.insert(rec.id.clone(), rec.clone());
            job_view(d, &rec)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list_jobs(State(app): State<App>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let since: u64 = query_num(&q, "since", 0)?;
    let limit: usize = query_num(&q, "limit", DEFAULT_LIMIT)?.min(MAX_LIMIT);
    let access = match q.get("access").map(String::as_str) {
        None => None,
        Some("private") => Some(Access::Private),
        Some("shared") => Some(Access::Shared),
        Some(other) => return Err(ApiError::bad_request(format!("unknown access `{other}`"))),
    };
    let author = q.get("author");
    Ok(Json(app.read(|d| {
        let mut jobs: Vec<&JobRecord> = d
            .jobs
            .values()
            .filter(|r| r.seq > since)
            .filter(|r| access.is_none_or(|a| r.access == a))
            .filter(|r| author.is_none_or(|a| &r.author == a))
            .collect();
        jobs.sort_by_key(|r| r.seq);
        jobs.truncate(limit);
        let next = jobs.last().map_or(since, |r| r.seq);
        json!({
            "jobs": jobs.iter().map(|r| job_view(d, r)).collect::<Vec<_>>(),
            "next": next,
        })
    })))
}

async fn get_job(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let rec = app.job(&id)?;
    Ok(Json(app.read(|d| job_view(d, &rec))))
}

/// Replace an attached configuration file of a pending job and prepare its
/// tasks again. Only `job.json` is accepted.
async fn put_file(State(app): State<App>, UrlPath((id, name)): UrlPath<(String, String)>, body: Bytes) -> ApiResult<Json<Value>> {
    let rec = app.job(&id)?;
    if name != JOB_FILE {
        return Err(ApiError::bad_request(format!("only `{JOB_FILE}` can be replaced")));
    }
    if rec.state != JobState::Pending {
        return Err(ApiError::conflict(format!("job {id} is not pending")));
    }
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("file is not UTF-8"))?;
    let prepared = prepare_job(&app, &id, text.clone(), rec.root.clone(), None).await?;
    let sources: BTreeMap<String, String> = prepared.files.iter().map(|(k, v)| (k.clone(), digest(v))).collect();
    let total = prepared.tasks.len();
    let warnings = prepared.warnings.clone();
    let priority = prepared.priority;
    let prepared = Arc::new(prepared);
    let map = app.0.prepared.clone();
    app.write(move |d| {
        let rec = d.jobs.get_mut(&id).expect("job exists");
        if rec.state != JobState::Pending {
            return Err(ApiError::conflict(format!("job {id} is not pending")));
        }
        rec.files.insert(name, text);
        rec.files_version += 1;
        rec.sources = sources;
        rec.task_total = total;
        rec.warnings = warnings;
        rec.priority = priority;
        map.lock().unwrap().insert(id.clone(), prepared);
        let rec = rec.clone();
        Ok(job_view(d, &rec))
    })
    .await?
    .map(Json)
}

fn job_spec(job: &PreparedJob) -> JobSpec {
    JobSpec {
        id: job.id.clone(),
        name: job.name.clone(),
        priority: job.priority,
        tasks: job
            .tasks
            .iter()
            .map(|t| TaskRef {
                id: t.task.id.clone(),
                job: job.id.clone(),
                dir: t.dir.clone(),
                limits: ResourceLimits::from(t.task.limits),
                priority: t.task.priority,
            })
            .collect(),
    }
}

async fn start_job(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    app.job(&id)?;
    let prepared = app.prepared(&id)?;
    let jid = id.clone();
    let view = app
        .write(move |d| {
            let rec = d.jobs.get_mut(&jid).expect("job exists");
            if rec.state != JobState::Pending {
                return Err(ApiError::conflict(format!("job {jid} is not pending")));
            }
            rec.state = if rec.task_total == 0 { JobState::Done } else { JobState::Running };
            rec.started_at = Some(now());
            let rec = rec.clone();
            Ok(job_view(d, &rec))
        })
        .await??;
    app.0.sched.submit(job_spec(&prepared));
    Ok(Json(view))
}

async fn cancel_job(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    app.job(&id)?;
    let prepared = app.prepared(&id)?;
    let jid = id.clone();
    let (view, was_running) = app
        .write(move |d| {
            let rec = d.jobs.get_mut(&jid).expect("job exists");
            let was = rec.state;
            match was {
                JobState::Pending | JobState::Running => rec.state = JobState::Cancelled,
                _ => return Err(ApiError::conflict(format!("job {jid} is already finished"))),
            }
            if was == JobState::Pending {
                for t in &prepared.tasks {
                    apply_result(
                        d,
                        &jid,
                        TaskResult {
                            task: t.task.id.clone(),
                            fragment: t.task.fragment.clone(),
                            requirement: t.task.requirement.clone(),
                            status: TaskStatus::Cancelled,
                            verdict: None,
                            trace: None,
                            signature: None,
                            wall_seconds: 0.0,
                        },
                    );
                }
            }
            let rec = d.jobs[&jid].clone();
            Ok((job_view(d, &rec), was == JobState::Running))
        })
        .await??;
    if was_running {
        app.0.sched.cancel(&id);
    }
    Ok(Json(view))
}

async fn job_progress(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let rec = app.job(&id)?;
    let progress = app.0.sched.progress(&id).unwrap_or_else(|| Progress {
        solved: app.read(|d| d.results.get(&id).map_or(0, Vec::len)),
        total: rec.task_total,
        elapsed_seconds: 0.0,
        remaining_seconds: if rec.state == JobState::Pending { None } else { Some(0.0) },
    });
    Ok(Json(json!({"job": id, "state": rec.state, "progress": progress})))
}

/// A result without its bulky parts, plus the marks assessing it.
fn result_view(d: &StoreData, r: &ResultRecord) -> Value {
    let mut v = json!(r);
    if let Some(obj) = v.as_object_mut() {
        obj.remove("trace");
        if let Some(verdict) = obj.get_mut("verdict").and_then(Value::as_object_mut) {
            verdict.remove("witness");
            verdict.remove("coverage");
        }
    }
    let assessments: Vec<Value> = d
        .marks
        .assessments
        .iter()
        .filter(|a| a.task_id == r.id)
        .map(|a| {
            json!({
                "mark_id": a.mark_id,
                "mode": a.mode,
                "verdict_class": d.marks.marks.get(&a.mark_id).map(|m| m.verdict_class),
            })
        })
        .collect();
    v["assessments"] = json!(assessments);
    v
}

/// Results in arrival order from the `since` cursor. With `wait` seconds
/// the request blocks until a new result arrives, the job finishes, or the
/// wait elapses.
async fn job_results(State(app): State<App>, UrlPath(id): UrlPath<String>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    app.job(&id)?;
    let since: usize = query_num(&q, "since", 0)?;
    let limit: usize = query_num(&q, "limit", DEFAULT_LIMIT)?.clamp(1, MAX_LIMIT);
    let wait: f64 = query_num(&q, "wait", 0.0)?;
    if !wait.is_finite() || wait < 0.0 {
        return Err(ApiError::bad_request("`wait` must be a non-negative number"));
    }
    let deadline = Instant::now() + Duration::from_secs_f64(wait.min(MAX_WAIT));
    let mut version = app.0.version.clone();
    loop {
        version.borrow_and_update();
        let (view, fresh, complete) = app.read(|d| {
            let rec = &d.jobs[&id];
            let list = d.results.get(&id).map(Vec::as_slice).unwrap_or(&[]);
            let page: Vec<Value> = list.iter().skip(since).take(limit).map(|r| result_view(d, r)).collect();
            let next = since + page.len();
            let complete = matches!(rec.state, JobState::Done | JobState::Cancelled) && list.len() >= rec.task_total;
            let n = page.len();
            (
                json!({
                    "job": id,
                    "state": rec.state,
                    "results": page,
                    "next": next,
                    "total": rec.task_total,
                    "complete": complete && next >= list.len(),
                }),
                n,
                complete,
            )
        });
        let left = deadline.saturating_duration_since(Instant::now());
        if fresh > 0 || complete || left.is_zero() {
            return Ok(Json(view));
        }
        if tokio::time::timeout(left, version.changed()).await.is_err() {
            continue;
        }
    }
}

async fn job_coverage(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    app.job(&id)?;
    let prepared = app.prepared(&id)?;
    let coverages: Vec<TaskCoverage> = app.read(|d| {
        d.results
            .get(&id)
            .map(|l| l.iter().filter_map(|r| r.result.verdict.as_ref()?.coverage.clone()).collect())
            .unwrap_or_default()
    });
    let report = results::merge_coverage(&coverages, &job::coverage_base(&prepared.files));
    let considered = report.directories(Denominator::Considered);
    let all = report.directories(Denominator::All);
    Ok(Json(json!({
        "job": id,
        "report": report,
        "directories": {"considered": considered, "all": all},
    })))
}

/// Text of a program source or model file of a job, by the file name used
/// in traces.
async fn job_source(State(app): State<App>, UrlPath(id): UrlPath<String>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    app.job(&id)?;
    let path = q.get("path").ok_or_else(|| ApiError::bad_request("query parameter `path` is required"))?;
    let prepared = app.prepared(&id)?;
    let text = prepared.files.get(path).cloned().or_else(|| {
        prepared
            .tasks
            .iter()
            .flat_map(|t| t.model_sources.iter())
            .find(|(name, _)| name == path)
            .map(|(_, text)| text.clone())
    });
    match text {
        Some(t) => Ok(([("content-type", "text/plain; charset=utf-8")], t).into_response()),
        None => Err(ApiError::not_found(format!("no file {path} in job {id}"))),
    }
}

fn status_of(r: &TaskResult) -> String {
    match (&r.status, &r.verdict) {
        (TaskStatus::Solved, Some(v)) => v.status_line(),
        _ => "cancelled".into(),
    }
}

/// Compare two jobs as sets of files and their verification results.
async fn job_diff(State(app): State<App>, UrlPath((a, b)): UrlPath<(String, String)>) -> ApiResult<Json<Value>> {
    let ra = app.job(&a)?;
    let rb = app.job(&b)?;
    let (added, removed, changed) = {
        let added: Vec<&String> = rb.sources.keys().filter(|k| !ra.sources.contains_key(*k)).collect();
        let removed: Vec<&String> = ra.sources.keys().filter(|k| !rb.sources.contains_key(*k)).collect();
        let changed: Vec<&String> = ra
            .sources
            .iter()
            .filter(|(k, v)| rb.sources.get(*k).is_some_and(|w| w != *v))
            .map(|(k, _)| k)
            .collect();
        (json!(added), json!(removed), json!(changed))
    };
    let verdicts = app.read(|d| {
        let statuses = |job: &str| -> BTreeMap<(String, String), String> {
            d.results
                .get(job)
                .map(|l| {
                    l.iter()
                        .map(|r| ((r.result.fragment.clone(), r.result.requirement.clone()), status_of(&r.result)))
                        .collect()
                })
                .unwrap_or_default()
        };
        let sa = statuses(&a);
        let sb = statuses(&b);
        let keys: BTreeSet<&(String, String)> = sa.keys().chain(sb.keys()).collect();
        keys.into_iter()
            .filter(|k| sa.get(*k) != sb.get(*k))
            .map(|k| json!({"fragment": k.0, "requirement": k.1, "a": sa.get(k), "b": sb.get(k)}))
            .collect::<Vec<_>>()
    });
    Ok(Json(json!({
        "a": a,
        "b": b,
        "files": {"added": added, "removed": removed, "changed": changed},
        "verdicts": verdicts,
    })))
}

async fn task_trace(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let rec = app
        .read(|d| d.task(&id).cloned())
        .ok_or_else(|| ApiError::not_found(format!("no task {id}")))?;
    let trace = rec.result.trace.ok_or_else(|| ApiError::not_found(format!("task {id} has no error trace")))?;
    Ok(Json(json!({
        "task": id,
        "fragment": rec.result.fragment,
        "requirement": rec.result.requirement,
        "signature": rec.result.signature,
        "trace": trace,
    })))
}

// ---- marks ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateMark {
    task: String,
    verdict_class: VerdictClass,
    description: String,
    #[serde(default)]
    tags: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateMark {
    verdict_class: VerdictClass,
    description: String,
    #[serde(default)]
    tags: Vec<String>,
    signature: Option<Signature>,
}

fn associations_view(d: &StoreData, mark: u64) -> Value {
    json!(d.marks.associations(mark))
}

/// Create a mark from a task's signature; the task itself is assessed
/// manually and every other matching task automatically.
async fn create_mark(State(app): State<App>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateMark = parse_body(&body)?;
    if req.description.trim().is_empty() {
        return Err(ApiError::bad_request("description must not be empty"));
    }
    let view = app
        .write(move |d| -> ApiResult<Value> {
            let signature = d
                .marks
                .tasks
                .get(&req.task)
                .cloned()
                .ok_or_else(|| ApiError::not_found(format!("no unsafe or failed task {}", req.task)))?;
            let id = d
                .marks
                .create(MarkDraft {
                    verdict_class: req.verdict_class,
                    description: req.description,
                    tags: req.tags,
                    signature,
                })?
                .id;
            d.marks.assess_manually(&req.task, id)?;
            Ok(json!({"mark": d.marks.marks[&id], "associations": associations_view(d, id)}))
        })
        .await??;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list_marks(State(app): State<App>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Json<Value>> {
    let since: u64 = query_num(&q, "since", 0)?;
    let limit: usize = query_num(&q, "limit", DEFAULT_LIMIT)?.min(MAX_LIMIT);
    Ok(Json(app.read(|d| {
        let marks: Vec<_> = d.marks.marks.range(since + 1..).take(limit).map(|(_, m)| m).collect();
        let next = marks.last().map_or(since, |m| m.id);
        json!({"marks": marks, "next": next})
    })))
}

fn mark_id(raw: &str) -> ApiResult<u64> {
    raw.parse().map_err(|_| ApiError::not_found(format!("no mark {raw}")))
}

async fn get_mark(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let id = mark_id(&id)?;
    app.read(|d| d.marks.marks.get(&id).map(|m| json!(m)))
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no mark {id}")))
}

/// Edit a mark. Its history keeps every earlier revision.
async fn update_mark(State(app): State<App>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let id = mark_id(&id)?;
    let req: UpdateMark = parse_body(&body)?;
    if req.description.trim().is_empty() {
        return Err(ApiError::bad_request("description must not be empty"));
    }
    app.write(move |d| -> ApiResult<Value> {
        let current = d.marks.marks.get(&id).ok_or(MarkError::UnknownMark(id))?;
        let signature = req.signature.unwrap_or_else(|| current.signature.clone());
        d.marks.update(
            id,
            MarkDraft {
                verdict_class: req.verdict_class,
                description: req.description,
                tags: req.tags,
                signature,
            },
        )?;
        Ok(json!({"mark": d.marks.marks[&id], "associations": associations_view(d, id)}))
    })
    .await?
    .map(Json)
}

async fn mark_associations(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let id = mark_id(&id)?;
    app.read(|d| d.marks.marks.contains_key(&id).then(|| associations_view(d, id)))
        .map(|a| Json(json!({"mark": id, "associations": a})))
        .ok_or_else(|| ApiError::not_found(format!("no mark {id}")))
}
