mod common;

use common::{depth, process};
use forge_core::emg::{parse_process, print_process};
use forge_core::miniver::VerdictKind;
use forge_core::results::{
    annotate_relevance, mark_signature, merge_coverage, verdict_statistics, CoverageBase, ErrorTrace, FileCoverage,
    FileTotals, TaskCoverage, TraceEvent, TraceEventKind,
};
use forge_core::sched::Verdict;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn file_coverage() -> impl Strategy<Value = FileCoverage> {
    (
        prop::collection::btree_set(1usize..40, 0..10),
        prop::collection::btree_set(1usize..40, 0..10),
        prop::collection::btree_set("f[0-4]", 0..4),
        prop::collection::btree_set("f[0-4]", 0..4),
    )
        .prop_map(|(lines, covered_lines, functions, covered_functions)| FileCoverage {
            lines,
            covered_lines,
            functions,
            covered_functions,
        })
}

fn coverage() -> impl Strategy<Value = TaskCoverage> {
    prop::collection::btree_map("[ab]/[xy]\\.c", file_coverage(), 0..4).prop_map(|files| TaskCoverage { files })
}

/// One model-file statement: executing function and optional annotation.
#[derive(Debug, Clone)]
struct Step {
    function: String,
    annotation: Option<(bool, String)>,
    in_model: bool,
}

fn steps() -> impl Strategy<Value = Vec<Step>> {
    prop::collection::vec(
        (
            "ldv_[a-c]",
            prop::option::of((any::<bool>(), "[a-z]{1,5}( [a-z]{1,5}){0,3}")),
            any::<bool>(),
        )
            .prop_map(|(function, annotation, in_model)| Step {
                function,
                annotation,
                in_model,
            }),
        1..12,
    )
}

/// Model source and trace for the steps, with the model shifted down by
/// `model_shift` lines and program lines by `program_shift`.
fn render(steps: &[Step], model_shift: usize, program_shift: usize) -> (String, ErrorTrace) {
    let mut src = "\n".repeat(model_shift);
    let mut line = model_shift;
    let mut events = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        if !s.in_model {
            events.push(TraceEvent {
                file: "drivers/x.c".into(),
                line: program_shift + i + 1,
                function: s.function.clone(),
                kind: TraceEventKind::Statement,
                text: format!("x{i}();"),
                relevant: true,
                note: None,
                assert_desc: None,
            });
            continue;
        }
        if let Some((assert, text)) = &s.annotation {
            src.push_str(&format!("/* {} {text} */\n", if *assert { "ASSERT" } else { "NOTE" }));
            line += 1;
        }
        src.push_str(&format!("s{i}();\n"));
        line += 1;
        events.push(TraceEvent {
            file: "model.c".into(),
            line,
            function: s.function.clone(),
            kind: TraceEventKind::Statement,
            text: format!("s{i}();"),
            relevant: true,
            note: None,
            assert_desc: None,
        });
    }
    (
        src,
        ErrorTrace {
            events,
            source_refs: BTreeMap::new(),
        },
    )
}

fn verdict(kind: VerdictKind) -> Verdict {
    Verdict {
        kind,
        reason: (kind == VerdictKind::Unknown).then(|| "timeout".into()),
        witness: None,
        coverage: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn process_print_parse_round_trip(e in process()) {
        prop_assert!(depth(&e) <= 6);
        let text = print_process(&e);
        prop_assert_eq!(parse_process(&text).unwrap(), e, "{}", text);
    }
}

proptest! {
    #[test]
    fn coverage_union_laws(a in coverage(), b in coverage(), c in coverage()) {
        prop_assert_eq!(a.union(&b), b.union(&a));
        prop_assert_eq!(a.union(&b).union(&c), a.union(&b.union(&c)));
        prop_assert_eq!(a.union(&a), a.clone());
        prop_assert_eq!(a.union(&TaskCoverage::default()), a);
    }

    #[test]
    fn merged_coverage_never_exceeds_totals(reports in prop::collection::vec(coverage(), 0..4)) {
        let base = CoverageBase {
            files: ["a/x.c", "a/y.c", "b/x.c"]
                .iter()
                .map(|f| (f.to_string(), FileTotals { lines: 40, functions: 5 }))
                .collect(),
        };
        let report = merge_coverage(&reports, &base);
        for s in report.files.values() {
            prop_assert!(s.lines_covered <= s.lines_total);
            prop_assert!(s.functions_covered <= s.functions_total);
        }
    }

    #[test]
    fn signature_ignores_line_shifts(steps in steps(), dm in 0usize..20, dp in 0usize..20) {
        let (src0, t0) = render(&steps, 0, 0);
        let (src1, t1) = render(&steps, dm, dp);
        let a = annotate_relevance(t0, &[("model.c".into(), src0)]);
        let b = annotate_relevance(t1, &[("model.c".into(), src1)]);
        prop_assert_eq!(mark_signature(&a), mark_signature(&b));
    }

    #[test]
    fn annotated_model_events_are_exactly_the_relevant_ones(steps in steps()) {
        let (src, t) = render(&steps, 3, 0);
        let t = annotate_relevance(t, &[("model.c".into(), src)]);
        let model: Vec<&Step> = steps.iter().filter(|s| s.in_model).collect();
        let events: Vec<&TraceEvent> = t.events.iter().filter(|e| e.file == "model.c").collect();
        for (s, e) in model.iter().zip(&events) {
            prop_assert_eq!(e.relevant, s.annotation.is_some());
        }
    }

    #[test]
    fn verdict_shares_sum_to_hundred(u in 0usize..2000, s in 0usize..2000, k in 0usize..2000) {
        prop_assume!(u + s + k > 0);
        let mut vs = Vec::new();
        vs.extend(std::iter::repeat_n(verdict(VerdictKind::Unsafe), u));
        vs.extend(std::iter::repeat_n(verdict(VerdictKind::Safe), s));
        vs.extend(std::iter::repeat_n(verdict(VerdictKind::Unknown), k));
        let stats = verdict_statistics(&vs, &[]);
        let sum: u32 = stats.by_kind.iter().map(|x| x.percent).sum();
        prop_assert!((99..=101).contains(&sum), "{}", sum);
        prop_assert_eq!(stats.total, u + s + k);
    }
}
