//! Bounded explicit-state reachability checker for a small C subset.
//!
//! Decides whether `__VERIFIER_error()` (or a failing `ldv_assert`) is
//! reachable from the entry function named by the property. Nondeterministic
//! values range over a small domain and every combination is executed, so
//! every reported violation replays concretely.

pub mod exec;
pub mod parse;

pub use exec::{Bounds, Event, EventKind, PathEnd, PathResult};
pub use parse::{parse_program, ParseError, Program};

use crate::results::{FileCoverage, TaskCoverage};
use crate::srcmap::LineMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write;
use std::sync::OnceLock;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Safe,
    Unsafe,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniVerdict {
    pub kind: VerdictKind,
    /// Why the verdict is Unknown: `timeout`, `unsupported`, `tool-failure: ...`.
    pub reason: Option<String>,
    /// Violation path; empty unless Unsafe.
    pub trace: Vec<Event>,
    /// Number of executed paths.
    pub explored_states: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutput {
    pub verdict: MiniVerdict,
    pub witness: Option<String>,
    pub coverage: TaskCoverage,
}

/// The reachability property with its entry function, or an unsupported one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Property {
    Reach { entry: String },
    Unsupported(String),
}

fn property_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^CHECK\(\s*init\((\w+)\(\)\)\s*,\s*LTL\(\s*G\s*!\s*call\(\s*(__VERIFIER_error|reach_error)\(\)\s*\)\s*\)\s*\)$")
            .unwrap()
    })
}

/// Parse a property file; every line must be the reachability property.
pub fn parse_property(text: &str) -> Property {
    let mut entry = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match property_re().captures(line) {
            Some(c) => entry = Some(c[1].to_string()),
            None => return Property::Unsupported(line.to_string()),
        }
    }
    match entry {
        Some(entry) => Property::Reach { entry },
        None => Property::Unsupported(String::new()),
    }
}

fn unknown(reason: impl Into<String>, explored: usize) -> MiniVerdict {
    MiniVerdict {
        kind: VerdictKind::Unknown,
        reason: Some(reason.into()),
        trace: Vec::new(),
        explored_states: explored,
    }
}

/// Check `program` against `property` and produce witness and coverage.
///
/// `program_name` names the file in the witness and the coverage of lines
/// outside any line marker.
pub fn check(program: &str, program_name: &str, property: &str, bounds: &Bounds) -> CheckOutput {
    let lines = LineMap::from_source(program, program_name);
    let entry = match parse_property(property) {
        Property::Reach { entry } => entry,
        Property::Unsupported(p) => {
            return CheckOutput {
                verdict: unknown(format!("unsupported property {p}"), 0),
                witness: None,
                coverage: TaskCoverage::default(),
            }
        }
    };
    let prog = match parse_program(program) {
        Ok(p) => p,
        Err(e) => {
            return CheckOutput {
                verdict: unknown(format!("tool-failure: {e}"), 0),
                witness: None,
                coverage: TaskCoverage::default(),
            }
        }
    };
    let started = Instant::now();
    let mut prefix: Vec<usize> = Vec::new();
    let mut paths = 0;
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    let mut functions: BTreeSet<String> = BTreeSet::new();
    let mut bound_hit: Option<String> = None;
    let mut failure: Option<String> = None;
    let mut violation: Option<Vec<Event>> = None;
    loop {
        let r = exec::run_path(&prog, &entry, bounds, &prefix, started);
        paths += 1;
        covered.extend(r.lines.iter().copied());
        functions.extend(r.functions.iter().cloned());
        match r.end {
            PathEnd::Error => {
                violation = Some(r.events);
                break;
            }
            PathEnd::Bound(m) => {
                bound_hit.get_or_insert(m);
            }
            PathEnd::Failure(m) => {
                failure = Some(m);
                break;
            }
            _ => {}
        }
        let time_out = bounds.time_limit.is_some_and(|t| started.elapsed() > t);
        match exec::next_prefix(&r.choices) {
            Some(p) if paths < bounds.max_paths && !time_out => prefix = p,
            Some(_) => {
                bound_hit.get_or_insert_with(|| "path limit".into());
                break;
            }
            None => break,
        }
    }
    let coverage = build_coverage(&prog, &lines, &covered, &functions);
    let verdict = match (violation, failure, bound_hit) {
        (Some(trace), _, _) => MiniVerdict {
            kind: VerdictKind::Unsafe,
            reason: None,
            trace,
            explored_states: paths,
        },
        (None, Some(f), _) => unknown(format!("tool-failure: {f}"), paths),
        (None, None, Some(_)) => unknown("timeout", paths),
        (None, None, None) => MiniVerdict {
            kind: VerdictKind::Safe,
            reason: None,
            trace: Vec::new(),
            explored_states: paths,
        },
    };
    let witness = (verdict.kind == VerdictKind::Unsafe).then(|| witness_graphml(&verdict.trace, program_name, property));
    CheckOutput {
        verdict,
        witness,
        coverage,
    }
}

/// All feasible paths of at most `max_paths`, with their end state.
/// Infeasible paths are dropped.
pub fn explore_paths(program: &str, entry: &str, bounds: &Bounds) -> Result<Vec<PathResult>, ParseError> {
    let prog = parse_program(program)?;
    let started = Instant::now();
    let mut prefix = Vec::new();
    let mut out = Vec::new();
    let mut runs = 0;
    loop {
        let r = exec::run_path(&prog, entry, bounds, &prefix, started);
        runs += 1;
        let next = exec::next_prefix(&r.choices);
        if r.end != PathEnd::Infeasible {
            out.push(r);
        }
        match next {
            Some(p) if runs < bounds.max_paths => prefix = p,
            _ => break,
        }
    }
    Ok(out)
}

fn build_coverage(prog: &Program, lines: &LineMap, covered: &BTreeSet<usize>, functions: &BTreeSet<String>) -> TaskCoverage {
    let mut cov = TaskCoverage::default();
    for l in &prog.code_lines {
        let (file, line) = lines.resolve(*l);
        let fc = cov.files.entry(file).or_default();
        fc.lines.insert(line);
        if covered.contains(l) {
            fc.covered_lines.insert(line);
        }
    }
    for f in prog.functions.values() {
        let (file, _) = lines.resolve(f.line);
        let fc: &mut FileCoverage = cov.files.entry(file).or_default();
        fc.functions.insert(f.name.clone());
        if functions.contains(&f.name) {
            fc.covered_functions.insert(f.name.clone());
        }
    }
    cov
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const WITNESS_KEYS: &[(&str, &str, &str, &str)] = &[
    ("witness-type", "witness-type", "string", "graph"),
    ("sourcecodelang", "sourcecodelang", "string", "graph"),
    ("producer", "producer", "string", "graph"),
    ("specification", "specification", "string", "graph"),
    ("programfile", "programfile", "string", "graph"),
    ("entry", "isEntryNode", "boolean", "node"),
    ("violation", "isViolationNode", "boolean", "node"),
    ("startline", "startline", "int", "edge"),
    ("enterFunction", "enterFunction", "string", "edge"),
    ("returnFrom", "returnFromFunction", "string", "edge"),
    ("control", "control", "string", "edge"),
    ("sourcecode", "sourcecode", "string", "edge"),
];

/// Violation witness automaton: one edge per trace event.
pub fn witness_graphml(trace: &[Event], program_name: &str, property: &str) -> String {
    let mut x = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    x.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\">\n");
    for (id, name, ty, target) in WITNESS_KEYS {
        let _ = writeln!(x, " <key attr.name=\"{name}\" attr.type=\"{ty}\" for=\"{target}\" id=\"{id}\"/>");
    }
    x.push_str(" <graph edgedefault=\"directed\">\n");
    let data = |x: &mut String, indent: &str, key: &str, v: &str| {
        let _ = writeln!(x, "{indent}<data key=\"{key}\">{}</data>", xml_escape(v));
    };
    data(&mut x, "  ", "witness-type", "violation_witness");
    data(&mut x, "  ", "sourcecodelang", "C");
    data(&mut x, "  ", "producer", "forge-miniver");
    data(&mut x, "  ", "specification", property.trim());
    data(&mut x, "  ", "programfile", program_name);
    x.push_str("  <node id=\"N0\">\n   <data key=\"entry\">true</data>\n  </node>\n");
    for (i, ev) in trace.iter().enumerate() {
        let last = i + 1 == trace.len();
        let target = i + 1;
        if last && ev.kind == EventKind::Error {
            let _ = writeln!(x, "  <node id=\"N{target}\">\n   <data key=\"violation\">true</data>\n  </node>");
        } else {
            let _ = writeln!(x, "  <node id=\"N{target}\"/>");
        }
        let _ = writeln!(x, "  <edge source=\"N{i}\" target=\"N{target}\">");
        data(&mut x, "   ", "startline", &ev.line.to_string());
        match ev.kind {
            EventKind::Call => data(&mut x, "   ", "enterFunction", &ev.function),
            EventKind::Return => data(&mut x, "   ", "returnFrom", &ev.function),
            EventKind::Branch(taken) => {
                data(&mut x, "   ", "control", if taken { "condition-true" } else { "condition-false" });
                data(&mut x, "   ", "sourcecode", &ev.text);
            }
            EventKind::Statement | EventKind::Error => data(&mut x, "   ", "sourcecode", &ev.text),
        }
        x.push_str("  </edge>\n");
    }
    x.push_str(" </graph>\n</graphml>\n");
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    const PROP: &str = "CHECK( init(main()), LTL(G ! call(__VERIFIER_error())) )\n";

    fn verdict(src: &str) -> MiniVerdict {
        check(src, "t.c", PROP, &Bounds::default()).verdict
    }

    #[test]
    fn trivial_program_is_safe() {
        let v = verdict("int main(){return 0;}");
        assert_eq!(v.kind, VerdictKind::Safe);
        assert_eq!(v.explored_states, 1);
    }

    #[test]
    fn nondet_branch_reaches_error() {
        let src = "int __VERIFIER_nondet_int(void);\nvoid __VERIFIER_error(void);\n\
                   int main(void)\n{\n    int x = __VERIFIER_nondet_int();\n    if (x)\n        __VERIFIER_error();\n    return 0;\n}\n";
        let out = check(src, "t.c", PROP, &Bounds::default());
        assert_eq!(out.verdict.kind, VerdictKind::Unsafe);
        let last = out.verdict.trace.last().unwrap();
        assert_eq!((last.kind, last.line), (EventKind::Error, 7));
        assert!(out.witness.unwrap().contains("<data key=\"violation\">true</data>"));
        assert!(out.coverage.files["t.c"].covered_lines.contains(&7));
    }

    #[test]
    fn assumptions_prune_paths() {
        let src = "int main(void) { int x = __VERIFIER_nondet_int(); __VERIFIER_assume(x == 0); if (x) __VERIFIER_error(); return 0; }";
        assert_eq!(verdict(src).kind, VerdictKind::Safe);
    }

    #[test]
    fn loops_beyond_the_bound_are_unknown() {
        let v = verdict("int main(void) { int i = 0; while (1) { i++; } return 0; }");
        assert_eq!((v.kind, v.reason.as_deref()), (VerdictKind::Unknown, Some("timeout")));
        let v = verdict("int main(void) { int i; int s = 0; for (i = 0; i < 10; i++) s += i; if (s != 45) __VERIFIER_error(); return 0; }");
        assert_eq!(v.kind, VerdictKind::Safe);
    }

    #[test]
    fn globals_pointers_and_structs() {
        let src = "struct s { int a; int b; };\nstatic int g;\nstruct s gs = { .b = 3 };\n\
                   int get(struct s *p) { return p->a + p->b; }\n\
                   int main(void) { struct s *p = malloc(8); int *q = &g; *q = 2; if (!p) return 0; p->a = g; p->b = gs.b;\n\
                   if (get(p) != 5) __VERIFIER_error(); switch (g) { case 1: __VERIFIER_error(); case 2: break; default: __VERIFIER_error(); }\n\
                   return 0; }";
        let v = verdict(src);
        assert_eq!(v.kind, VerdictKind::Safe, "{:?}", v.reason);
        assert_eq!(v.explored_states, 2);
    }

    #[test]
    fn function_pointers_and_goto() {
        let src = "static int one(void) { return 1; }\nint (*fp)(void) = one;\n\
                   int main(void) { int n = 0;\nagain:\n n++; if (n < 3) goto again; if (fp() + n != 4) __VERIFIER_error(); return 0; }";
        assert_eq!(verdict(src).kind, VerdictKind::Safe);
    }

    #[test]
    fn unsupported_inputs() {
        let v = check("int main(){return 0;}", "t.c", "CHECK( init(main()), LTL(G valid-free) )", &Bounds::default()).verdict;
        assert_eq!(v.kind, VerdictKind::Unknown);
        assert!(v.reason.unwrap().starts_with("unsupported"));
        let v = verdict("int main(){ return undefined_var; }");
        assert!(v.reason.unwrap().starts_with("tool-failure"));
        let v = verdict("int f(){ return 0; }");
        assert!(v.reason.unwrap().contains("entry function main"));
    }

    #[test]
    fn exploration_grows_with_the_domain() {
        let src = "int main(void) { int a = __VERIFIER_nondet_int(); int b = __VERIFIER_nondet_int(); return a + b; }";
        let small = check(src, "t.c", PROP, &Bounds::default()).verdict.explored_states;
        let big = check(
            src,
            "t.c",
            PROP,
            &Bounds {
                nondet_values: vec![0, 1, 2],
                ..Default::default()
            },
        )
        .verdict
        .explored_states;
        assert_eq!((small, big), (4, 9));
    }

    #[test]
    fn property_forms() {
        assert_eq!(
            parse_property("CHECK( init(entry_point()), LTL(G ! call(__VERIFIER_error())) )\n"),
            Property::Reach {
                entry: "entry_point".into()
            }
        );
        assert!(matches!(parse_property("CHECK( init(main()), LTL(G valid-deref) )"), Property::Unsupported(_)));
    }
}
