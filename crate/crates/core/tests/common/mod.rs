//! Scripted verifier backend and randomized schedule checks shared by the
//! scheduler tests and the acceptance run.
#![allow(dead_code)]

use forge_core::emg::{parse_model, translate, IntermediateModel, ProcessExpr, TranslateOptions};
use forge_core::job::{self, JobConfig, JobReport};
use forge_core::miniver::{explore_paths, Bounds, EventKind, PathEnd, VerdictKind};
use forge_core::sched::{
    Backend, JobSpec, JobState, Outcome, ResourceLimits, RunMeasurement, Scheduler, Speculation, TaskRef, TaskStatus,
    Termination, Verdict,
};
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

pub const FULL_MEMORY: u64 = 1 << 30;
pub const GATE_JOB: &str = "gate";

#[derive(Debug, Clone)]
pub struct Script {
    pub verdict: VerdictKind,
    pub need_memory: u64,
    pub sleep_ms: u64,
}

/// Backend answering from a script. Tasks of the gate job block until the
/// gate opens; others sleep, then report out-of-memory when given less
/// memory than they need.
#[derive(Default)]
pub struct ScriptedBackend {
    pub scripts: HashMap<String, Script>,
    gate: Mutex<bool>,
    gate_cv: Condvar,
    pub running: AtomicUsize,
    pub max_running: AtomicUsize,
    pub attempts: Mutex<BTreeMap<String, Vec<u64>>>,
}

impl ScriptedBackend {
    pub fn new(scripts: HashMap<String, Script>) -> Self {
        ScriptedBackend {
            scripts,
            ..Default::default()
        }
    }

    pub fn open_gate(&self) {
        *self.gate.lock().unwrap() = true;
        self.gate_cv.notify_all();
    }
}

impl Backend for ScriptedBackend {
    fn run(&self, task: &TaskRef, limits: &ResourceLimits, cancel: &AtomicBool) -> Result<(Verdict, RunMeasurement), String> {
        let now = self.running.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_running.fetch_max(now, Ordering::SeqCst);
        self.attempts
            .lock()
            .unwrap()
            .entry(task.id.clone())
            .or_default()
            .push(limits.memory_bytes);
        let start = Instant::now();
        let verdict = if task.job == GATE_JOB {
            let mut open = self.gate.lock().unwrap();
            while !*open {
                open = self.gate_cv.wait(open).unwrap();
            }
            Verdict::unknown("timeout")
        } else {
            let s = &self.scripts[&task.id];
            let until = start + Duration::from_millis(s.sleep_ms);
            while Instant::now() < until && !cancel.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_micros(200));
            }
            if cancel.load(Ordering::SeqCst) {
                Verdict::unknown("component-failure: cancelled")
            } else if limits.memory_bytes < s.need_memory {
                Verdict::unknown("out-of-memory")
            } else {
                Verdict {
                    kind: s.verdict,
                    reason: (s.verdict == VerdictKind::Unknown).then(|| "timeout".to_string()),
                    witness: None,
                    coverage: None,
                }
            }
        };
        self.running.fetch_sub(1, Ordering::SeqCst);
        let wall = start.elapsed().as_secs_f64();
        Ok((
            verdict,
            RunMeasurement {
                cpu_seconds: wall,
                wall_seconds: wall,
                peak_memory_bytes: 0,
                exit_code: Some(0),
                signal: None,
                terminated_by: Termination::None,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CancelAt {
    Never,
    /// While every worker is still held by the gate.
    BeforeRelease,
    /// This many milliseconds after the gate opens.
    AfterRelease(u64),
}

#[derive(Debug, Clone)]
pub struct JobPlan {
    pub priority: i64,
    /// `(task priority, script)` in submission order.
    pub tasks: Vec<(i64, Script)>,
    pub cancel: CancelAt,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub workers: usize,
    pub jobs: Vec<JobPlan>,
}

fn verdict_kind() -> impl Strategy<Value = VerdictKind> {
    prop_oneof![Just(VerdictKind::Safe), Just(VerdictKind::Unsafe), Just(VerdictKind::Unknown)]
}

fn script() -> impl Strategy<Value = Script> {
    (verdict_kind(), prop_oneof![Just(FULL_MEMORY / 4), Just(FULL_MEMORY * 3 / 4)], 0u64..3).prop_map(
        |(verdict, need_memory, sleep_ms)| Script {
            verdict,
            need_memory,
            sleep_ms,
        },
    )
}

fn cancel_at() -> impl Strategy<Value = CancelAt> {
    prop_oneof![
        4 => Just(CancelAt::Never),
        1 => Just(CancelAt::BeforeRelease),
        1 => (0u64..4).prop_map(CancelAt::AfterRelease),
    ]
}

pub fn schedule() -> impl Strategy<Value = Schedule> {
    let job = (-2i64..=2, prop::collection::vec((-1i64..=1, script()), 1..=6), cancel_at())
        .prop_map(|(priority, tasks, cancel)| JobPlan { priority, tasks, cancel });
    (1usize..=4, prop::collection::vec(job, 1..=4)).prop_map(|(workers, jobs)| Schedule { workers, jobs })
}

fn job_id(i: usize) -> String {
    format!("j{i}")
}

fn task_id(i: usize, k: usize) -> String {
    format!("j{i}t{k}")
}

fn task_ref(job: &str, id: String, priority: i64) -> TaskRef {
    TaskRef {
        id,
        job: job.to_string(),
        dir: PathBuf::new(),
        limits: ResourceLimits {
            cpu_seconds: 10.0,
            wall_seconds: 10.0,
            memory_bytes: FULL_MEMORY,
            cores: 1,
        },
        priority,
    }
}

fn wait_until(mut f: impl FnMut() -> bool) -> Result<(), String> {
    let deadline = Instant::now() + Duration::from_secs(10);
    while !f() {
        if Instant::now() > deadline {
            return Err("timed out waiting for the scheduler".into());
        }
        std::thread::sleep(Duration::from_micros(200));
    }
    Ok(())
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Run a schedule and check worker cap, priority order, cancellation and
/// verdicts under speculation.
pub fn check_schedule(s: &Schedule) -> Result<(), String> {
    let mut scripts = HashMap::new();
    for (i, j) in s.jobs.iter().enumerate() {
        for (k, (_, sc)) in j.tasks.iter().enumerate() {
            scripts.insert(task_id(i, k), sc.clone());
        }
    }
    let backend = Arc::new(ScriptedBackend::new(scripts));
    let sched = Scheduler::new(backend.clone(), s.workers, Speculation::default());
    sched.submit(JobSpec {
        id: GATE_JOB.into(),
        name: GATE_JOB.into(),
        priority: i64::MAX,
        tasks: (0..s.workers).map(|k| task_ref(GATE_JOB, format!("gate{k}"), 0)).collect(),
    });
    wait_until(|| backend.running.load(Ordering::SeqCst) == s.workers)?;

    let mut keys = HashMap::new();
    for (i, j) in s.jobs.iter().enumerate() {
        let job = job_id(i);
        let tasks = j
            .tasks
            .iter()
            .enumerate()
            .map(|(k, (p, _))| {
                keys.insert(task_id(i, k), ((j.priority, *p), i, k));
                task_ref(&job, task_id(i, k), *p)
            })
            .collect();
        sched.submit(JobSpec {
            id: job.clone(),
            name: job,
            priority: j.priority,
            tasks,
        });
    }
    for (i, j) in s.jobs.iter().enumerate() {
        if j.cancel == CancelAt::BeforeRelease {
            ensure!(sched.cancel(&job_id(i)), "cancel of pending job {i} refused");
        }
    }
    backend.open_gate();
    let released = Instant::now();
    let mut late: Vec<(u64, usize)> = s
        .jobs
        .iter()
        .enumerate()
        .filter_map(|(i, j)| match j.cancel {
            CancelAt::AfterRelease(ms) => Some((ms, i)),
            _ => None,
        })
        .collect();
    late.sort();
    // Start-order position after which each late-cancelled job must not start.
    let mut cancel_marks = HashMap::new();
    for (ms, i) in late {
        let at = released + Duration::from_millis(ms);
        if let Some(d) = at.checked_duration_since(Instant::now()) {
            std::thread::sleep(d);
        }
        sched.cancel(&job_id(i));
        cancel_marks.insert(i, sched.start_order().len());
    }

    let total: usize = s.workers + s.jobs.iter().map(|j| j.tasks.len()).sum::<usize>();
    let mut outcomes: Vec<Outcome> = Vec::new();
    while outcomes.len() < total {
        let o = sched
            .outcomes()
            .recv_timeout(Duration::from_secs(10))
            .map_err(|_| format!("only {} of {total} outcomes arrived", outcomes.len()))?;
        outcomes.push(o);
    }
    ensure!(
        sched.outcomes().recv_timeout(Duration::from_millis(5)).is_err(),
        "more outcomes than tasks"
    );
    let order: Vec<String> = sched.start_order().into_iter().filter(|t| !t.starts_with("gate")).collect();
    let full_order = sched.start_order();
    sched.shutdown();

    // Worker cap.
    let max = backend.max_running.load(Ordering::SeqCst);
    ensure!(max <= s.workers, "{max} tasks ran at once with {} workers", s.workers);

    // One outcome per task.
    let mut by_task: HashMap<&str, &Outcome> = HashMap::new();
    for o in &outcomes {
        ensure!(by_task.insert(&o.task, o).is_none(), "task {} finished twice", o.task);
    }

    // Priority order: every start had the highest key among tasks still
    // queued, so keys never increase; equal keys keep FIFO within a job.
    for w in order.windows(2) {
        let (a, b) = (keys[&w[0]], keys[&w[1]]);
        ensure!(a.0 >= b.0, "{} {:?} started before {} {:?}", w[0], a.0, w[1], b.0);
        if a.0 == b.0 && a.1 == b.1 {
            ensure!(a.2 < b.2, "{} started before {} of the same job", w[0], w[1]);
        }
    }
    // Round-robin among uncancelled jobs sharing a key.
    let mut remaining: HashMap<((i64, i64), usize), usize> = HashMap::new();
    for (key, job, _) in keys.values() {
        *remaining.entry((*key, *job)).or_default() += 1;
    }
    let mut started: HashMap<((i64, i64), usize), usize> = HashMap::new();
    for t in &order {
        let (key, job, _) = keys[t];
        *started.entry((key, job)).or_default() += 1;
        let live: Vec<usize> = (0..s.jobs.len())
            .filter(|j| s.jobs[*j].cancel == CancelAt::Never)
            .filter(|j| started.get(&(key, *j)).copied().unwrap_or(0) < remaining.get(&(key, *j)).copied().unwrap_or(0))
            .collect();
        for a in &live {
            for b in &live {
                let (ca, cb) = (started.get(&(key, *a)).copied().unwrap_or(0), started.get(&(key, *b)).copied().unwrap_or(0));
                ensure!(ca <= cb + 1, "job {a} ran {ca} tasks of key {key:?} while job {b} ran {cb}");
            }
        }
    }

    for (i, j) in s.jobs.iter().enumerate() {
        let job = job_id(i);
        let state = sched_state(&outcomes, &job);
        match j.cancel {
            CancelAt::Never => {
                ensure!(state.iter().all(|st| *st == TaskStatus::Solved), "job {job} has cancelled tasks");
                for (k, (_, sc)) in j.tasks.iter().enumerate() {
                    let o = by_task[task_id(i, k).as_str()];
                    let v = o.verdict.as_ref().ok_or("solved task without verdict")?;
                    // Speculation never changes the verdict.
                    ensure!(v.kind == sc.verdict, "task {} got {:?}, scripted {:?}", o.task, v.kind, sc.verdict);
                    let expected = if sc.need_memory > FULL_MEMORY / 2 {
                        vec![FULL_MEMORY / 2, FULL_MEMORY]
                    } else {
                        vec![FULL_MEMORY / 2]
                    };
                    ensure!(o.attempts == expected, "task {} attempts {:?}", o.task, o.attempts);
                }
            }
            CancelAt::BeforeRelease => {
                ensure!(state.iter().all(|st| *st == TaskStatus::Cancelled), "pending job {job} ran tasks");
                ensure!(!order.iter().any(|t| keys[t].1 == i), "cancelled job {job} started a task");
            }
            CancelAt::AfterRelease(_) => {
                let mark = cancel_marks[&i];
                ensure!(
                    !full_order[mark..].iter().any(|t| !t.starts_with("gate") && keys[t].1 == i),
                    "job {job} started a task after its cancellation"
                );
            }
        }
        for o in outcomes.iter().filter(|o| o.job == job) {
            ensure!(
                (o.status == TaskStatus::Solved) == o.verdict.is_some(),
                "task {} status and verdict disagree",
                o.task
            );
        }
    }
    Ok(())
}

fn sched_state(outcomes: &[Outcome], job: &str) -> Vec<TaskStatus> {
    outcomes.iter().filter(|o| o.job == job).map(|o| o.status).collect()
}

/// Final job states reported by the scheduler for a schedule without
/// cancellation.
pub fn final_states(s: &Schedule) -> Result<Vec<JobState>, String> {
    let backend = Arc::new(ScriptedBackend::new(
        s.jobs
            .iter()
            .enumerate()
            .flat_map(|(i, j)| j.tasks.iter().enumerate().map(move |(k, (_, sc))| (task_id(i, k), sc.clone())))
            .collect(),
    ));
    let sched = Scheduler::new(backend, s.workers, Speculation::default());
    let mut total = 0;
    for (i, j) in s.jobs.iter().enumerate() {
        total += j.tasks.len();
        sched.submit(JobSpec {
            id: job_id(i),
            name: job_id(i),
            priority: j.priority,
            tasks: j.tasks.iter().enumerate().map(|(k, (p, _))| task_ref(&job_id(i), task_id(i, k), *p)).collect(),
        });
    }
    for _ in 0..total {
        sched.outcomes().recv_timeout(Duration::from_secs(10)).map_err(|e| e.to_string())?;
    }
    Ok((0..s.jobs.len()).map(|i| sched.job_state(&job_id(i)).unwrap()).collect())
}

fn process_name() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,6}"
}

fn process_leaf() -> impl Strategy<Value = ProcessExpr> {
    prop_oneof![
        process_name().prop_map(ProcessExpr::Block),
        (process_name(), any::<bool>()).prop_map(|(name, replicative)| ProcessExpr::Receive { name, replicative }),
        process_name().prop_map(ProcessExpr::Send),
        process_name().prop_map(ProcessExpr::Jump),
    ]
}

/// Process expressions of depth at most 6.
pub fn process() -> impl Strategy<Value = ProcessExpr> {
    process_leaf().prop_recursive(5, 64, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=4).prop_map(ProcessExpr::Seq),
            prop::collection::vec(inner, 2..=4).prop_map(ProcessExpr::Choice),
        ]
    })
}

pub fn depth(e: &ProcessExpr) -> usize {
    match e {
        ProcessExpr::Seq(xs) | ProcessExpr::Choice(xs) => 1 + xs.iter().map(depth).max().unwrap_or(0),
        _ => 1,
    }
}

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn load_model(name: &str) -> IntermediateModel {
    let text = std::fs::read_to_string(fixture(&format!("emg/{name}"))).unwrap();
    parse_model(&serde_json::from_str(&text).unwrap()).unwrap()
}

/// Completed paths of the translated harness, as sequences of action names
/// of at most `max_len` actions.
pub fn harness_traces(model: &IntermediateModel, max_len: usize) -> Result<BTreeSet<Vec<String>>, String> {
    let opts = TranslateOptions {
        entry_point: "main".into(),
        action_hooks: true,
        finalizers: Vec::new(),
    };
    let h = translate(model, &opts).map_err(|e| e.to_string())?;
    let paths = explore_paths(&h.environment_c, "main", &Bounds::default()).map_err(|e| e.to_string())?;
    Ok(paths
        .iter()
        .filter(|p| p.end == PathEnd::Completed)
        .map(|p| {
            p.events
                .iter()
                .filter(|e| e.kind == EventKind::Call && e.function.starts_with("ldv_emg_action_"))
                .filter_map(|e| e.function.rsplit_once("__").map(|(_, a)| a.to_string()))
                .collect::<Vec<_>>()
        })
        .filter(|t| t.len() <= max_len)
        .collect())
}

pub fn trace_set(v: &[&[&str]]) -> BTreeSet<Vec<String>> {
    v.iter().map(|t| t.iter().map(|s| s.to_string()).collect()).collect()
}

/// Prepare and solve the toy module job with the built-in checker.
pub fn run_toy_job(workdir: &Path) -> Result<JobReport, String> {
    let (mut conf, root) = JobConfig::load(&fixture("toy/job.json")).map_err(|e| e.to_string())?;
    conf.workdir = Some(workdir.to_path_buf());
    let prepared = job::prepare(&conf, &root).map_err(|e| e.to_string())?;
    Ok(job::run_prepared(
        &prepared,
        Arc::new(forge_core::sched::MiniverBackend::default()),
        2,
        forge_core::sched::Speculation::default(),
        |_| {},
    ))
}
