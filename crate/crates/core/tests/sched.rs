mod common;

use common::{check_schedule, final_states, schedule, CancelAt};
use forge_core::sched::{
    estimate_progress, run_with_limits, DispatchQueue, JobState, ResourceLimits, TaskRef, Termination,
};
use proptest::prelude::*;
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

fn task(job: &str, id: &str, priority: i64) -> TaskRef {
    TaskRef {
        id: id.into(),
        job: job.into(),
        dir: PathBuf::new(),
        limits: ResourceLimits::default(),
        priority,
    }
}

fn drain(q: &mut DispatchQueue) -> Vec<String> {
    std::iter::from_fn(|| q.pop().map(|t| t.id)).collect()
}

#[test]
fn queue_orders_by_job_priority() {
    let mut q = DispatchQueue::default();
    q.push(task("a", "t1", 0), 2);
    q.push(task("b", "t2", 0), 1);
    q.push(task("c", "t3", 0), 2);
    assert_eq!(drain(&mut q), ["t1", "t3", "t2"]);
}

#[test]
fn queue_is_round_robin_across_jobs() {
    let mut q = DispatchQueue::default();
    for id in ["a1", "a2", "a3"] {
        q.push(task("a", id, 0), 0);
    }
    for id in ["b1", "b2"] {
        q.push(task("b", id, 0), 0);
    }
    assert_eq!(drain(&mut q), ["a1", "b1", "a2", "b2", "a3"]);
}

#[test]
fn task_priority_breaks_ties_within_job_priority() {
    let mut q = DispatchQueue::default();
    q.push(task("a", "low", 0), 1);
    q.push(task("a", "high", 5), 1);
    q.push(task("b", "other", 9), 0);
    assert_eq!(drain(&mut q), ["high", "low", "other"]);
    let mut q = DispatchQueue::default();
    q.push(task("a", "x", 0), 0);
    q.push(task("b", "y", 0), 0);
    assert_eq!(q.remove_job("a").len(), 1);
    assert_eq!(drain(&mut q), ["y"]);
}

#[test]
fn progress_estimate() {
    let p = estimate_progress(4, &[], 3.0);
    assert_eq!((p.solved, p.remaining_seconds), (0, None));
    let p = estimate_progress(4, &[2.0, 4.0], 6.0);
    assert_eq!(p.remaining_seconds, Some(6.0));
    assert_eq!(estimate_progress(2, &[1.0, 1.0], 2.0).remaining_seconds, Some(0.0));
}

fn limits(cpu: f64, wall: f64, memory: u64) -> ResourceLimits {
    ResourceLimits {
        cpu_seconds: cpu,
        wall_seconds: wall,
        memory_bytes: memory,
        cores: 1,
    }
}

#[test]
fn quick_command_is_measured() {
    let m = run_with_limits(&mut Command::new("true"), &limits(5.0, 5.0, 1 << 30), None).unwrap();
    assert_eq!(m.terminated_by, Termination::None);
    assert_eq!(m.exit_code, Some(0));
    let m = run_with_limits(Command::new("sh").args(["-c", "exit 3"]), &limits(5.0, 5.0, 1 << 30), None).unwrap();
    assert_eq!(m.exit_code, Some(3));
}

#[test]
fn busy_loop_hits_cpu_limit() {
    let start = Instant::now();
    let m = run_with_limits(Command::new("sh").args(["-c", "while :; do :; done"]), &limits(1.0, 20.0, 1 << 30), None).unwrap();
    assert_eq!(m.terminated_by, Termination::Cpu);
    assert!(m.cpu_seconds >= 0.9, "{m:?}");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn sleeping_command_hits_wall_limit() {
    let m = run_with_limits(Command::new("sleep").arg("30"), &limits(20.0, 0.5, 1 << 30), None).unwrap();
    assert_eq!(m.terminated_by, Termination::Wall);
    assert!(m.wall_seconds < 5.0);
}

#[test]
fn memory_hog_hits_memory_limit() {
    let script = "import time\nx = b'x' * (400 * 1024 * 1024)\ntime.sleep(5)\n";
    let m = run_with_limits(Command::new("python3").args(["-c", script]), &limits(20.0, 20.0, 100 << 20), None).unwrap();
    assert_eq!(m.terminated_by, Termination::Memory, "{m:?}");
}

#[test]
fn cancel_flag_kills_run() {
    let flag = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
    let f = flag.clone();
    std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(100));
        f.store(true, std::sync::atomic::Ordering::SeqCst);
    });
    let m = run_with_limits(Command::new("sleep").arg("30"), &limits(20.0, 20.0, 1 << 30), Some(&flag)).unwrap();
    assert_eq!(m.terminated_by, Termination::Cancelled);
}

#[test]
fn invalid_limits_are_rejected() {
    assert!(run_with_limits(&mut Command::new("true"), &limits(0.0, 1.0, 1), None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn randomized_schedules(s in schedule()) {
        if let Err(e) = check_schedule(&s) {
            return Err(TestCaseError::fail(e));
        }
    }

    #[test]
    fn uncancelled_jobs_end_done(mut s in schedule()) {
        for j in &mut s.jobs {
            j.cancel = CancelAt::Never;
        }
        let states = final_states(&s).map_err(TestCaseError::fail)?;
        prop_assert!(states.iter().all(|st| *st == JobState::Done));
    }
}
