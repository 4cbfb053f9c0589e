//! Running verification tasks: resource-limited subprocesses, a priority
//! scheduler with a bounded worker pool, speculative low-memory first runs
//! and progress estimation.

use crate::miniver::{self, Bounds, VerdictKind};
use crate::results::TaskCoverage;
use crate::taskgen::{self, Limits};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchedulerError {
    #[error("cannot spawn: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("wait failed: {0}")]
    Wait(String),
    #[error("invalid limits: {0}")]
    Limits(String),
}

/// File names of the backend contract inside a task directory.
pub const VERDICT_FILE: &str = "verdict.txt";
pub const WITNESS_FILE: &str = "witness.graphml";
pub const COVERAGE_FILE: &str = "coverage.json";

/// Slack allowed between a limit and the measured use of an unterminated run.
pub const MEASUREMENT_SLACK: f64 = 0.5;

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub memory_bytes: u64,
    pub cores: u32,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Limits::default().into()
    }
}

impl From<Limits> for ResourceLimits {
    fn from(l: Limits) -> Self {
        ResourceLimits {
            cpu_seconds: l.cpu_seconds as f64,
            wall_seconds: l.wall_seconds as f64,
            memory_bytes: l.memory_bytes,
            cores: 1,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        if self.cpu_seconds > 0.0 && self.wall_seconds > 0.0 && self.memory_bytes > 0 && self.cores > 0 {
            Ok(())
        } else {
            Err(SchedulerError::Limits(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    None,
    Cpu,
    Wall,
    Memory,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeasurement {
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub peak_memory_bytes: u64,
    /// Exit code, or `None` when killed by a signal.
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub terminated_by: Termination,
}

/// CPU seconds and resident bytes of all processes in process group `pgid`.
fn group_usage(pgid: i32) -> (f64, u64) {
    let tick = unsafe { libc::sysconf(libc::_SC_CLK_TCK) }.max(1) as f64;
    let page = unsafe { libc::sysconf(libc::_SC_PAGESIZE) }.max(1) as u64;
    let Ok(dir) = std::fs::read_dir("/proc") else {
        return (0.0, 0);
    };
    let (mut cpu, mut rss) = (0.0, 0);
    for e in dir.flatten() {
        let name = e.file_name();
        let Some(pid) = name.to_str().filter(|n| n.bytes().all(|b| b.is_ascii_digit())) else {
            continue;
        };
        let Ok(stat) = std::fs::read_to_string(format!("/proc/{pid}/stat")) else {
            continue;
        };
        let Some(rest) = stat.rsplit_once(')').map(|r| r.1) else {
            continue;
        };
        let f: Vec<&str> = rest.split_whitespace().collect();
        if f.len() < 22 || f[2].parse::<i32>() != Ok(pgid) {
            continue;
        }
        let num = |i: usize| f[i].parse::<u64>().unwrap_or(0);
        cpu += (num(11) + num(12) + num(13) + num(14)) as f64 / tick;
        rss += num(21) * page;
    }
    (cpu, rss)
}

/// Run `cmd` in its own process group, killing the group when a limit is
/// exceeded or `cancel` is raised.
///
/// CPU time is enforced by polling plus `RLIMIT_CPU`, memory by polling the
/// group's resident set, so short allocation spikes between polls go unseen.
pub fn run_with_limits(
    cmd: &mut Command,
    limits: &ResourceLimits,
    cancel: Option<&AtomicBool>,
) -> Result<RunMeasurement, SchedulerError> {
    limits.validate()?;
    let cpu_rlimit = limits.cpu_seconds.ceil() as libc::rlim_t + 1;
    unsafe {
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            let rl = libc::rlimit {
                rlim_cur: cpu_rlimit,
                rlim_max: cpu_rlimit + 1,
            };
            libc::setrlimit(libc::RLIMIT_CPU, &rl);
            Ok(())
        });
    }
    let start = Instant::now();
    let child = cmd.spawn()?;
    let pid = child.id() as i32;
    let mut killed: Option<Termination> = None;
    let (mut cpu, mut peak) = (0.0f64, 0u64);
    let (status, usage) = loop {
        let mut status = 0;
        let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
        let r = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut usage) };
        if r == pid {
            break (status, usage);
        }
        if r < 0 {
            return Err(SchedulerError::Wait(std::io::Error::last_os_error().to_string()));
        }
        let (c, rss) = group_usage(pid);
        cpu = cpu.max(c);
        peak = peak.max(rss);
        if killed.is_none() {
            let reason = if rss > limits.memory_bytes {
                Some(Termination::Memory)
            } else if cpu > limits.cpu_seconds {
                Some(Termination::Cpu)
            } else if start.elapsed().as_secs_f64() > limits.wall_seconds {
                Some(Termination::Wall)
            } else if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                Some(Termination::Cancelled)
            } else {
                None
            };
            if reason.is_some() {
                killed = reason;
                unsafe { libc::killpg(pid, libc::SIGKILL) };
            }
        }
        std::thread::sleep(POLL);
    };
    // Orphans left in the group.
    unsafe { libc::killpg(pid, libc::SIGKILL) };
    let wall = start.elapsed().as_secs_f64();
    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 / 1e6;
    cpu = cpu.max(tv(usage.ru_utime) + tv(usage.ru_stime));
    peak = peak.max(usage.ru_maxrss as u64 * 1024);
    let (exit_code, signal) = if libc::WIFEXITED(status) {
        (Some(libc::WEXITSTATUS(status)), None)
    } else {
        (None, libc::WIFSIGNALED(status).then(|| libc::WTERMSIG(status)))
    };
    let terminated_by = killed.unwrap_or(match signal {
        Some(libc::SIGXCPU) | Some(libc::SIGKILL) if cpu >= limits.cpu_seconds => Termination::Cpu,
        _ => Termination::None,
    });
    Ok(RunMeasurement {
        cpu_seconds: cpu,
        wall_seconds: wall,
        peak_memory_bytes: peak,
        exit_code,
        signal,
        terminated_by,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// For Unknown: `timeout`, `out-of-memory`, `tool-failure`,
    /// `component-failure`, optionally followed by `: detail`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<TaskCoverage>,
}

impl Verdict {
    pub fn unknown(reason: impl Into<String>) -> Self {
        Verdict {
            kind: VerdictKind::Unknown,
            reason: Some(reason.into()),
            witness: None,
            coverage: None,
        }
    }

    pub fn is_out_of_memory(&self) -> bool {
        self.kind == VerdictKind::Unknown && self.reason.as_deref().is_some_and(|r| r.starts_with("out-of-memory"))
    }

    /// `SAFE`, `UNSAFE` or `UNKNOWN <reason>`.
    pub fn status_line(&self) -> String {
        match self.kind {
            VerdictKind::Safe => "SAFE".into(),
            VerdictKind::Unsafe => "UNSAFE".into(),
            VerdictKind::Unknown => format!("UNKNOWN {}", self.reason.as_deref().unwrap_or("tool-failure")),
        }
    }
}

/// Read the backend's output files from a task directory.
pub fn read_verdict_dir(dir: &Path) -> Verdict {
    let Ok(text) = std::fs::read_to_string(dir.join(VERDICT_FILE)) else {
        return Verdict::unknown(format!("tool-failure: no {VERDICT_FILE}"));
    };
    let line = text.lines().next().unwrap_or_default().trim();
    let (word, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let witness = std::fs::read_to_string(dir.join(WITNESS_FILE)).ok();
    let coverage = std::fs::read_to_string(dir.join(COVERAGE_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let kind = match word {
        "SAFE" => VerdictKind::Safe,
        "UNSAFE" if witness.is_some() => VerdictKind::Unsafe,
        "UNSAFE" => return Verdict::unknown("tool-failure: unsafe verdict without witness"),
        "UNKNOWN" => VerdictKind::Unknown,
        _ => return Verdict::unknown(format!("tool-failure: bad verdict line {line:?}")),
    };
    Verdict {
        kind,
        reason: (kind == VerdictKind::Unknown).then(|| {
            let r = rest.trim();
            if r.is_empty() { "tool-failure".to_string() } else { r.to_string() }
        }),
        witness,
        coverage,
    }
}

/// Write a verdict in the backend contract format.
pub fn write_verdict_dir(dir: &Path, verdict: &Verdict) -> std::io::Result<()> {
    std::fs::write(dir.join(VERDICT_FILE), verdict.status_line() + "\n")?;
    if let Some(w) = &verdict.witness {
        std::fs::write(dir.join(WITNESS_FILE), w)?;
    }
    if let Some(c) = &verdict.coverage {
        std::fs::write(dir.join(COVERAGE_FILE), serde_json::to_string_pretty(c).expect("coverage serializes"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRef {
    pub id: String,
    pub job: String,
    pub dir: PathBuf,
    pub limits: ResourceLimits,
    pub priority: i64,
}

pub trait Backend: Send + Sync {
    /// Solve one task. `Err` means the backend itself crashed.
    fn run(&self, task: &TaskRef, limits: &ResourceLimits, cancel: &AtomicBool) -> Result<(Verdict, RunMeasurement), String>;
}

/// External verifier command invoked as `program args... <task dir>`.
#[derive(Debug, Clone)]
pub struct CommandBackend {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl Backend for CommandBackend {
    fn run(&self, task: &TaskRef, limits: &ResourceLimits, cancel: &AtomicBool) -> Result<(Verdict, RunMeasurement), String> {
        let _ = std::fs::remove_file(task.dir.join(VERDICT_FILE));
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args).arg(&task.dir);
        let m = run_with_limits(&mut cmd, limits, Some(cancel)).map_err(|e| e.to_string())?;
        let verdict = match m.terminated_by {
            Termination::Cpu | Termination::Wall => Verdict::unknown("timeout"),
            Termination::Memory => Verdict::unknown("out-of-memory"),
            Termination::Cancelled => Verdict::unknown("component-failure: cancelled"),
            Termination::None => read_verdict_dir(&task.dir),
        };
        Ok((verdict, m))
    }
}

/// The bundled checker run in-process on `cil.i` and `safe-prps.prp`.
#[derive(Debug, Clone, Default)]
pub struct MiniverBackend {
    pub bounds: Bounds,
}

impl MiniverBackend {
    /// Check a task directory and write the contract files into it.
    pub fn check_dir(&self, dir: &Path, limits: &ResourceLimits) -> std::io::Result<Verdict> {
        let program = std::fs::read_to_string(dir.join(taskgen::PROGRAM_FILE))?;
        let property = std::fs::read_to_string(dir.join(taskgen::PROPERTY_FILE))?;
        let bounds = Bounds {
            time_limit: Some(Duration::from_secs_f64(limits.wall_seconds.min(limits.cpu_seconds))),
            ..self.bounds.clone()
        };
        let out = miniver::check(&program, taskgen::PROGRAM_FILE, &property, &bounds);
        let verdict = Verdict {
            kind: out.verdict.kind,
            reason: out.verdict.reason,
            witness: out.witness,
            coverage: Some(out.coverage),
        };
        write_verdict_dir(dir, &verdict)?;
        Ok(verdict)
    }
}

impl Backend for MiniverBackend {
    fn run(&self, task: &TaskRef, limits: &ResourceLimits, _cancel: &AtomicBool) -> Result<(Verdict, RunMeasurement), String> {
        let start = Instant::now();
        let verdict = self.check_dir(&task.dir, limits).map_err(|e| e.to_string())?;
        let wall = start.elapsed().as_secs_f64();
        let terminated_by = if verdict.reason.as_deref() == Some("timeout") && wall >= limits.wall_seconds {
            Termination::Wall
        } else {
            Termination::None
        };
        Ok((
            verdict,
            RunMeasurement {
                cpu_seconds: wall,
                wall_seconds: wall,
                peak_memory_bytes: 0,
                exit_code: Some(0),
                signal: None,
                terminated_by,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speculation {
    pub enabled: bool,
    /// Memory share of the first attempt.
    pub memory_factor: f64,
}

impl Default for Speculation {
    fn default() -> Self {
        Speculation {
            enabled: true,
            memory_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeculativeOutcome {
    pub verdict: Verdict,
    pub measurement: Option<RunMeasurement>,
    /// Memory reserved by each attempt.
    pub attempts: Vec<u64>,
}

/// Run first with reduced memory and once more at full limits if that run
/// ran out of memory.
pub fn speculative_run(task: &TaskRef, backend: &dyn Backend, speculation: Speculation, cancel: &AtomicBool) -> SpeculativeOutcome {
    let full = task.limits;
    let mut levels = vec![full];
    if speculation.enabled {
        let reduced = ((full.memory_bytes as f64 * speculation.memory_factor) as u64).max(1);
        if reduced < full.memory_bytes {
            levels.insert(
                0,
                ResourceLimits {
                    memory_bytes: reduced,
                    ..full
                },
            );
        }
    }
    let mut out = SpeculativeOutcome {
        verdict: Verdict::unknown("tool-failure"),
        measurement: None,
        attempts: Vec::new(),
    };
    for (i, limits) in levels.iter().enumerate() {
        out.attempts.push(limits.memory_bytes);
        match backend.run(task, limits, cancel) {
            Ok((v, m)) => {
                out.verdict = v;
                out.measurement = Some(m);
            }
            Err(e) => {
                out.verdict = Verdict::unknown(format!("tool-failure: {e}"));
                out.measurement = None;
            }
        }
        let last = i + 1 == levels.len();
        if last || !out.verdict.is_out_of_memory() || cancel.load(Ordering::SeqCst) {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub solved: usize,
    pub total: usize,
    pub elapsed_seconds: f64,
    /// `None` before the first task is solved.
    pub remaining_seconds: Option<f64>,
}

/// Remaining time as mean solution time times unsolved tasks.
pub fn estimate_progress(total: usize, solution_walls: &[f64], elapsed_seconds: f64) -> Progress {
    let solved = solution_walls.len();
    let remaining_seconds = if solved >= total {
        Some(0.0)
    } else if solved == 0 {
        None
    } else {
        Some(solution_walls.iter().sum::<f64>() / solved as f64 * (total - solved) as f64)
    };
    Progress {
        solved,
        total,
        elapsed_seconds,
        remaining_seconds,
    }
}

#[derive(Debug, Clone)]
struct Queued {
    key: (i64, i64),
    seq: u64,
    task: TaskRef,
}

/// Ready tasks ordered by (job priority, task priority), then round-robin
/// across jobs, then FIFO within a job.
#[derive(Debug, Clone, Default)]
pub struct DispatchQueue {
    items: Vec<Queued>,
    seq: u64,
    tick: u64,
    served: HashMap<String, u64>,
}

impl DispatchQueue {
    pub fn push(&mut self, task: TaskRef, job_priority: i64) {
        self.seq += 1;
        self.items.push(Queued {
            key: (job_priority, task.priority),
            seq: self.seq,
            task,
        });
    }

    pub fn pop(&mut self) -> Option<TaskRef> {
        let best = self.items.iter().map(|q| q.key).max()?;
        let idx = self
            .items
            .iter()
            .enumerate()
            .filter(|(_, q)| q.key == best)
            .min_by_key(|(_, q)| (self.served.get(&q.task.job).copied().unwrap_or(0), q.seq))
            .map(|(i, _)| i)?;
        let q = self.items.remove(idx);
        self.tick += 1;
        self.served.insert(q.task.job.clone(), self.tick);
        Some(q.task)
    }

    /// Drop and return all queued tasks of `job`.
    pub fn remove_job(&mut self, job: &str) -> Vec<TaskRef> {
        let (gone, keep) = std::mem::take(&mut self.items).into_iter().partition(|q| q.task.job == job);
        self.items = keep;
        gone.into_iter().map(|q: Queued| q.task).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub id: String,
    pub name: String,
    pub priority: i64,
    pub tasks: Vec<TaskRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Solved,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub job: String,
    pub task: String,
    pub status: TaskStatus,
    /// Present when solved.
    pub verdict: Option<Verdict>,
    pub measurement: Option<RunMeasurement>,
    pub attempts: Vec<u64>,
    pub wall_seconds: f64,
}

struct JobInfo {
    state: JobState,
    total: usize,
    finished: usize,
    started_at: Option<Instant>,
    walls: Vec<f64>,
}

struct State {
    queue: DispatchQueue,
    jobs: BTreeMap<String, JobInfo>,
    running: HashMap<String, Arc<AtomicBool>>,
    start_order: Vec<String>,
    shutdown: bool,
    sink: Sender<Outcome>,
}

struct Shared {
    state: Mutex<State>,
    cv: Condvar,
    backend: Arc<dyn Backend>,
    speculation: Speculation,
}

/// Bounded worker pool solving submitted jobs. Outcomes arrive on
/// [`Scheduler::outcomes`] in completion order.
pub struct Scheduler {
    shared: Arc<Shared>,
    handles: Vec<JoinHandle<()>>,
    outcomes: Receiver<Outcome>,
}

fn finish(state: &mut State, job: &str, outcome: Outcome) {
    if let Some(info) = state.jobs.get_mut(job) {
        info.finished += 1;
        if outcome.status == TaskStatus::Solved {
            info.walls.push(outcome.wall_seconds);
        }
        if info.finished == info.total && info.state == JobState::Running {
            info.state = JobState::Done;
        }
    }
    let _ = state.sink.send(outcome);
}

fn running_key(job: &str, task: &str) -> String {
    format!("{job}\u{0}{task}")
}

fn worker(shared: Arc<Shared>) {
    loop {
        let (task, cancel) = {
            let mut st = shared.state.lock().unwrap();
            let task = loop {
                if let Some(t) = st.queue.pop() {
                    break t;
                }
                if st.shutdown {
                    return;
                }
                st = shared.cv.wait(st).unwrap();
            };
            let cancel = Arc::new(AtomicBool::new(false));
            st.running.insert(running_key(&task.job, &task.id), cancel.clone());
            st.start_order.push(task.id.clone());
            if let Some(info) = st.jobs.get_mut(&task.job) {
                if info.state == JobState::Pending {
                    info.state = JobState::Running;
                    info.started_at = Some(Instant::now());
                }
            }
            (task, cancel)
        };
        let start = Instant::now();
        let run = speculative_run(&task, shared.backend.as_ref(), shared.speculation, &cancel);
        let mut st = shared.state.lock().unwrap();
        st.running.remove(&running_key(&task.job, &task.id));
        let cancelled = cancel.load(Ordering::SeqCst);
        let outcome = Outcome {
            job: task.job.clone(),
            task: task.id.clone(),
            status: if cancelled { TaskStatus::Cancelled } else { TaskStatus::Solved },
            verdict: (!cancelled).then_some(run.verdict),
            measurement: run.measurement,
            attempts: run.attempts,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        finish(&mut st, &task.job, outcome);
        shared.cv.notify_all();
    }
}

/// Cloneable control handle of a [`Scheduler`].
#[derive(Clone)]
pub struct SchedulerHandle {
    shared: Arc<Shared>,
}

impl SchedulerHandle {
    /// Cancel a pending or running job: queued tasks are dropped and running
    /// ones are signalled. Returns false for unknown or finished jobs.
    pub fn cancel(&self, job: &str) -> bool {
        let mut st = self.shared.state.lock().unwrap();
        match st.jobs.get_mut(job) {
            Some(info) if matches!(info.state, JobState::Pending | JobState::Running) => info.state = JobState::Cancelled,
            _ => return false,
        }
        for t in st.queue.remove_job(job) {
            finish(
                &mut st,
                job,
                Outcome {
                    job: job.to_string(),
                    task: t.id,
                    status: TaskStatus::Cancelled,
                    verdict: None,
                    measurement: None,
                    attempts: Vec::new(),
                    wall_seconds: 0.0,
                },
            );
        }
        let prefix = running_key(job, "");
        for (key, flag) in &st.running {
            if key.starts_with(&prefix) {
                flag.store(true, Ordering::SeqCst);
            }
        }
        true
    }

    /// Queue all tasks of a job atomically.
    pub fn submit(&self, job: JobSpec) {
        let mut st = self.shared.state.lock().unwrap();
        let total = job.tasks.len();
        st.jobs.insert(
            job.id.clone(),
            JobInfo {
                state: if total == 0 { JobState::Done } else { JobState::Pending },
                total,
                finished: 0,
                started_at: None,
                walls: Vec::new(),
            },
        );
        for t in job.tasks {
            st.queue.push(t, job.priority);
        }
        self.shared.cv.notify_all();
    }

    pub fn job_state(&self, job: &str) -> Option<JobState> {
        self.shared.state.lock().unwrap().jobs.get(job).map(|j| j.state)
    }

    pub fn progress(&self, job: &str) -> Option<Progress> {
        let st = self.shared.state.lock().unwrap();
        let j = st.jobs.get(job)?;
        let elapsed = j.started_at.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0);
        Some(estimate_progress(j.total, &j.walls, elapsed))
    }
}

impl Scheduler {
    pub fn new(backend: Arc<dyn Backend>, workers: usize, speculation: Speculation) -> Self {
        let (sink, outcomes) = channel();
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                queue: DispatchQueue::default(),
                jobs: BTreeMap::new(),
                running: HashMap::new(),
                start_order: Vec::new(),
                shutdown: false,
                sink,
            }),
            cv: Condvar::new(),
            backend,
            speculation,
        });
        let handles = (0..workers.max(1))
            .map(|_| {
                let s = shared.clone();
                std::thread::spawn(move || worker(s))
            })
            .collect();
        Scheduler {
            shared,
            handles,
            outcomes,
        }
    }

    /// See [`SchedulerHandle::submit`].
    pub fn submit(&self, job: JobSpec) {
        self.handle().submit(job)
    }

    pub fn handle(&self) -> SchedulerHandle {
        SchedulerHandle {
            shared: self.shared.clone(),
        }
    }

    /// See [`SchedulerHandle::cancel`].
    pub fn cancel(&self, job: &str) -> bool {
        self.handle().cancel(job)
    }

    pub fn job_state(&self, job: &str) -> Option<JobState> {
        self.handle().job_state(job)
    }

    pub fn progress(&self, job: &str) -> Option<Progress> {
        self.handle().progress(job)
    }

    pub fn outcomes(&self) -> &Receiver<Outcome> {
        &self.outcomes
    }

    /// Task ids in the order they were started.
    pub fn start_order(&self) -> Vec<String> {
        self.shared.state.lock().unwrap().start_order.clone()
    }

    /// True when no task is queued or running.
    pub fn is_idle(&self) -> bool {
        let st = self.shared.state.lock().unwrap();
        st.queue.is_empty() && st.running.is_empty()
    }

    /// Stop the workers after the queue drains.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.state.lock().unwrap().shutdown = true;
        self.shared.cv.notify_all();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for Scheduler {
    fn drop(&mut self) {
        self.stop();
    }
}
