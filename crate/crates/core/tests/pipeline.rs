//! The toy module job solved end to end: decomposition, environment
//! generation, weaving, packaging, scheduling and checking.

mod common;

use forge_core::miniver::VerdictKind;
use forge_core::results::TraceEventKind;
use std::time::{Duration, Instant};

const PUT_ASSERT: &str = "Decremented module reference counter should be greater than its initial state";

#[test]
fn toy_modules_verdicts_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let report = common::run_toy_job(dir.path()).unwrap();
    assert!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
    assert_eq!(report.results.len(), 3);

    for r in &report.results {
        let kind = r.verdict.as_ref().map(|v| v.kind);
        if r.fragment.contains("balanced") && !r.fragment.contains("unbalanced") {
            assert_eq!(kind, Some(VerdictKind::Safe), "{}", r.task);
            assert!(r.trace.is_none());
            continue;
        }
        assert_eq!(kind, Some(VerdictKind::Unsafe), "{}", r.task);
        let trace = r.trace.as_ref().unwrap();
        let last = trace.terminal().expect("trace ends in an error event");
        assert_eq!(last.kind, TraceEventKind::Error);
        assert_eq!(last.assert_desc.as_deref(), Some(PUT_ASSERT));
        assert!(last.relevant);
    }

    let unsafe_sigs: Vec<_> = report.results.iter().filter_map(|r| r.signature.clone()).collect();
    assert_eq!(unsafe_sigs.len(), 2);
    assert_eq!(unsafe_sigs[0], unsafe_sigs[1], "twin modules share a mark signature");

    let by_kind: Vec<(String, usize)> = report.statistics.by_kind.iter().map(|s| (s.label.clone(), s.count)).collect();
    assert_eq!(by_kind, vec![("Unsafe".into(), 2), ("Safe".into(), 1), ("Unknown".into(), 0)]);
}
