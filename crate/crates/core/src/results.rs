//! Violation witnesses, code coverage, verdict statistics and expert marks.
//!
//! Internal documents are JSON:
//!
//! - error trace: `{"events": [{"file", "line", "function", "kind", "text",
//!   "relevant", "note", "assert_desc"}], "source_refs": {"<merged line>":
//!   ["file", line]}}`
//! - task coverage: `{"files": {"<file>": {"lines": [..], "covered_lines":
//!   [..], "functions": [..], "covered_functions": [..]}}}`

use crate::miniver::VerdictKind;
use crate::sched::Verdict;
use crate::srcmap::LineMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WitnessError {
    #[error("malformed witness: {0}")]
    Malformed(String),
    #[error("witness has no path from the entry node to a violation node")]
    NoViolationPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceEventKind {
    Call,
    Return,
    Statement,
    Assumption,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub file: String,
    pub line: usize,
    pub function: String,
    pub kind: TraceEventKind,
    pub text: String,
    pub relevant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assert_desc: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub events: Vec<TraceEvent>,
    /// Merged-file line to original file and line.
    pub source_refs: BTreeMap<usize, (String, usize)>,
}

impl ErrorTrace {
    pub fn terminal(&self) -> Option<&TraceEvent> {
        self.events.last().filter(|e| e.kind == TraceEventKind::Error)
    }
}

/// Linearize a violation witness into an error trace.
///
/// The path is the shortest edge path from the entry node to a violation
/// node. Lines are mapped back through the `# N "file"` markers of
/// `merged_source`; unmarked lines belong to `program_name`.
pub fn parse_witness(graphml: &str, merged_source: &str, program_name: &str) -> Result<ErrorTrace, WitnessError> {
    let doc = roxmltree::Document::parse(graphml).map_err(|e| WitnessError::Malformed(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "graphml" {
        return Err(WitnessError::Malformed(format!("root element is <{}>", root.tag_name().name())));
    }
    // Key ids by attribute name, so witnesses with other id conventions work.
    let mut key_names: HashMap<&str, &str> = HashMap::new();
    for k in root.children().filter(|n| n.has_tag_name("key")) {
        let id = k.attribute("id").unwrap_or_default();
        key_names.insert(id, k.attribute("attr.name").unwrap_or(id));
    }
    let graph = root
        .children()
        .find(|n| n.has_tag_name("graph"))
        .ok_or_else(|| WitnessError::Malformed("no <graph> element".into()))?;
    let data = |n: roxmltree::Node| -> HashMap<String, String> {
        n.children()
            .filter(|c| c.has_tag_name("data"))
            .filter_map(|c| {
                let key = c.attribute("key")?;
                let name = key_names.get(key).copied().unwrap_or(key);
                Some((name.to_string(), c.text().unwrap_or_default().to_string()))
            })
            .collect()
    };
    let mut entry = None;
    let mut violations = BTreeSet::new();
    for n in graph.children().filter(|n| n.has_tag_name("node")) {
        let id = n.attribute("id").ok_or_else(|| WitnessError::Malformed("node without id".into()))?;
        let d = data(n);
        if d.get("isEntryNode").is_some_and(|v| v == "true") {
            entry = Some(id.to_string());
        }
        if d.get("isViolationNode").is_some_and(|v| v == "true") {
            violations.insert(id.to_string());
        }
    }
    let mut edges: Vec<(String, String, HashMap<String, String>)> = Vec::new();
    let mut out: HashMap<String, Vec<usize>> = HashMap::new();
    for e in graph.children().filter(|n| n.has_tag_name("edge")) {
        let (Some(s), Some(t)) = (e.attribute("source"), e.attribute("target")) else {
            return Err(WitnessError::Malformed("edge without source or target".into()));
        };
        out.entry(s.to_string()).or_default().push(edges.len());
        edges.push((s.to_string(), t.to_string(), data(e)));
    }
    let entry = entry.ok_or(WitnessError::NoViolationPath)?;
    // Breadth-first search for the violation path.
    let mut prev: HashMap<String, Option<usize>> = HashMap::from([(entry.clone(), None)]);
    let mut queue = std::collections::VecDeque::from([entry.clone()]);
    let mut found = None;
    while let Some(n) = queue.pop_front() {
        if violations.contains(&n) {
            found = Some(n);
            break;
        }
        for &ei in out.get(&n).map(Vec::as_slice).unwrap_or_default() {
            let t = &edges[ei].1;
            if !prev.contains_key(t) {
                prev.insert(t.clone(), Some(ei));
                queue.push_back(t.clone());
            }
        }
    }
    let mut node = found.ok_or(WitnessError::NoViolationPath)?;
    let mut path = Vec::new();
    while let Some(Some(ei)) = prev.get(&node) {
        path.push(*ei);
        node = edges[*ei].0.clone();
    }
    path.reverse();

    let lines = LineMap::from_source(merged_source, program_name);
    let mut trace = ErrorTrace::default();
    let mut stack: Vec<String> = Vec::new();
    for (i, ei) in path.iter().enumerate() {
        let d = &edges[*ei].2;
        let merged_line: usize = d.get("startline").and_then(|v| v.trim().parse().ok()).unwrap_or(0);
        let (file, line) = if merged_line > 0 {
            let r = lines.resolve(merged_line);
            trace.source_refs.insert(merged_line, r.clone());
            r
        } else {
            (program_name.to_string(), 0)
        };
        let text = d.get("sourcecode").cloned().unwrap_or_default();
        let current = stack.last().cloned().unwrap_or_default();
        let (kind, function) = if let Some(f) = d.get("enterFunction") {
            stack.push(f.clone());
            (TraceEventKind::Call, f.clone())
        } else if let Some(f) = d.get("returnFromFunction") {
            if stack.last() == Some(f) {
                stack.pop();
            }
            (TraceEventKind::Return, f.clone())
        } else if d.contains_key("control") || d.contains_key("assumption") {
            (TraceEventKind::Assumption, current)
        } else {
            (TraceEventKind::Statement, current)
        };
        let kind = if i + 1 == path.len() { TraceEventKind::Error } else { kind };
        trace.events.push(TraceEvent {
            file,
            line,
            function,
            kind,
            text,
            relevant: true,
            note: None,
            assert_desc: None,
        });
    }
    if trace.events.is_empty() {
        return Err(WitnessError::NoViolationPath);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationKind {
    Note,
    Assert,
}

fn annotation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)/\*\s*(NOTE|ASSERT)\b(.*?)\*/").unwrap())
}

/// `NOTE`/`ASSERT` comments of a model source keyed by the line of the
/// statement that follows each comment.
pub fn annotations(text: &str) -> BTreeMap<usize, (AnnotationKind, String)> {
    let mut out = BTreeMap::new();
    for c in annotation_re().captures_iter(text) {
        let end = c.get(0).unwrap().end();
        let Some(off) = text[end..].find(|ch: char| !ch.is_whitespace()) else {
            continue;
        };
        let line = text[..end + off].matches('\n').count() + 1;
        let kind = if &c[1] == "NOTE" { AnnotationKind::Note } else { AnnotationKind::Assert };
        let desc = c[2].split_whitespace().collect::<Vec<_>>().join(" ");
        out.insert(line, (kind, desc));
    }
    out
}

/// Attach NOTE/ASSERT texts to trace events and mark unannotated model
/// events irrelevant.
///
/// `model_sources` are `(file name, text)` pairs with the names used in the
/// trace. Among consecutive events on one annotated line only the last
/// carries the annotation, so the assert lands on the error event.
pub fn annotate_relevance(mut trace: ErrorTrace, model_sources: &[(String, String)]) -> ErrorTrace {
    let models: HashMap<&str, BTreeMap<usize, (AnnotationKind, String)>> =
        model_sources.iter().map(|(n, t)| (n.as_str(), annotations(t))).collect();
    let n = trace.events.len();
    for i in 0..n {
        let Some(notes) = models.get(trace.events[i].file.as_str()) else {
            continue;
        };
        let (file, line) = (&trace.events[i].file, trace.events[i].line);
        let same_next = i + 1 < n && trace.events[i + 1].file == *file && trace.events[i + 1].line == line;
        let ann = if same_next { None } else { notes.get(&line).cloned() };
        let e = &mut trace.events[i];
        match ann {
            Some((AnnotationKind::Note, t)) => {
                e.note = Some(t);
                e.relevant = true;
            }
            Some((AnnotationKind::Assert, t)) => {
                e.assert_desc = Some(t);
                e.relevant = true;
            }
            None => e.relevant = false,
        }
    }
    trace
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCoverage {
    /// Lines holding code.
    #[serde(default)]
    pub lines: BTreeSet<usize>,
    #[serde(default)]
    pub covered_lines: BTreeSet<usize>,
    #[serde(default)]
    pub functions: BTreeSet<String>,
    #[serde(default)]
    pub covered_functions: BTreeSet<String>,
}

/// Coverage of one verification task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCoverage {
    pub files: BTreeMap<String, FileCoverage>,
}

impl TaskCoverage {
    /// Per-file union of all sets.
    pub fn union(&self, other: &TaskCoverage) -> TaskCoverage {
        let mut files = self.files.clone();
        for (name, o) in &other.files {
            let f = files.entry(name.clone()).or_default();
            f.lines.extend(o.lines.iter().copied());
            f.covered_lines.extend(o.covered_lines.iter().copied());
            f.functions.extend(o.functions.iter().cloned());
            f.covered_functions.extend(o.covered_functions.iter().cloned());
        }
        TaskCoverage { files }
    }

    /// Parse a `file:line` hit list, one hit per line.
    pub fn from_hit_list(text: &str) -> Result<TaskCoverage, String> {
        let mut cov = TaskCoverage::default();
        for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (file, line) = l
                .trim()
                .rsplit_once(':')
                .and_then(|(f, n)| Some((f, n.parse::<usize>().ok()?)))
                .ok_or_else(|| format!("line {}: expected file:line", i + 1))?;
            let f = cov.files.entry(file.to_string()).or_default();
            f.lines.insert(line);
            f.covered_lines.insert(line);
        }
        Ok(cov)
    }
}

/// Line and function totals of the program's source files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageBase {
    pub files: BTreeMap<String, FileTotals>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileTotals {
    pub lines: usize,
    pub functions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileStats {
    pub lines_total: usize,
    pub lines_covered: usize,
    pub functions_total: usize,
    pub functions_covered: usize,
    pub covered_line_set: BTreeSet<usize>,
    /// Whether a verification tool considered the file.
    pub considered: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub lines_total: usize,
    pub lines_covered: usize,
    pub functions_total: usize,
    pub functions_covered: usize,
}

impl Totals {
    pub fn line_percent(&self) -> u32 {
        percent_floor(self.lines_covered, self.lines_total)
    }

    pub fn function_percent(&self) -> u32 {
        percent_floor(self.functions_covered, self.functions_total)
    }
}

/// Which files count in a directory's totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Denominator {
    /// Files that appear in some task report.
    Considered,
    /// All files of the base.
    All,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub files: BTreeMap<String, FileStats>,
    /// Report files absent from the base.
    pub unknown_files: BTreeSet<String>,
}

/// Integer percent rounded down.
pub fn percent_floor(part: usize, total: usize) -> u32 {
    if total == 0 {
        return 0;
    }
    (part as u128 * 100 / total as u128) as u32
}

/// Integer percent rounded to the nearest, halves up.
pub fn percent_nearest(part: usize, total: usize) -> u32 {
    if total == 0 {
        return 0;
    }
    ((part as u128 * 200 + total as u128) / (2 * total as u128)) as u32
}

/// Union the task reports and take totals from the base.
pub fn merge_coverage(reports: &[TaskCoverage], base: &CoverageBase) -> CoverageReport {
    let merged = reports.iter().fold(TaskCoverage::default(), |acc, r| acc.union(r));
    let mut report = CoverageReport::default();
    for (name, t) in &base.files {
        report.files.insert(
            name.clone(),
            FileStats {
                lines_total: t.lines,
                functions_total: t.functions,
                ..Default::default()
            },
        );
    }
    for (name, f) in &merged.files {
        let s = report.files.entry(name.clone()).or_insert_with(|| {
            report.unknown_files.insert(name.clone());
            FileStats {
                lines_total: f.lines.union(&f.covered_lines).count(),
                functions_total: f.functions.union(&f.covered_functions).count(),
                ..Default::default()
            }
        });
        s.considered = true;
        s.covered_line_set = f.covered_lines.clone();
        s.lines_covered = f.covered_lines.len().min(s.lines_total);
        s.functions_covered = f.covered_functions.len().min(s.functions_total);
    }
    report
}

impl CoverageReport {
    /// Totals per directory, with `""` as the root. A file `a/b/c.c` counts
    /// towards `""`, `a` and `a/b`.
    pub fn directories(&self, denominator: Denominator) -> BTreeMap<String, Totals> {
        let mut out: BTreeMap<String, Totals> = BTreeMap::new();
        for (name, f) in &self.files {
            if denominator == Denominator::Considered && !f.considered {
                continue;
            }
            let parts: Vec<&str> = name.split('/').collect();
            for depth in 0..parts.len() {
                let t = out.entry(parts[..depth].join("/")).or_default();
                t.lines_total += f.lines_total;
                t.lines_covered += f.lines_covered;
                t.functions_total += f.functions_total;
                t.functions_covered += f.functions_covered;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub label: String,
    pub count: usize,
    pub percent: u32,
}

/// Counts with nearest-percent shares, in the order given.
pub fn shares(counts: &[(String, usize)]) -> Vec<Share> {
    let total: usize = counts.iter().map(|c| c.1).sum();
    counts
        .iter()
        .map(|(label, count)| Share {
            label: label.clone(),
            count: *count,
            percent: percent_nearest(*count, total),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictStatistics {
    pub total: usize,
    /// Unsafe, Safe, Unknown.
    pub by_kind: Vec<Share>,
    pub by_unknown_reason: Vec<Share>,
    pub by_false_alarm: Vec<Share>,
}

/// Leading word of an Unknown reason, e.g. `tool-failure` for
/// `tool-failure: parse error`.
fn reason_class(reason: &str) -> String {
    reason.split(':').next().unwrap_or_default().trim().to_string()
}

/// Verdict shares per kind and per Unknown reason, plus false-alarm shares
/// over the given expert classes.
pub fn verdict_statistics(verdicts: &[Verdict], assessed: &[VerdictClass]) -> VerdictStatistics {
    let count = |k: VerdictKind| verdicts.iter().filter(|v| v.kind == k).count();
    let by_kind = shares(&[
        ("Unsafe".into(), count(VerdictKind::Unsafe)),
        ("Safe".into(), count(VerdictKind::Safe)),
        ("Unknown".into(), count(VerdictKind::Unknown)),
    ]);
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for v in verdicts.iter().filter(|v| v.kind == VerdictKind::Unknown) {
        *reasons.entry(reason_class(v.reason.as_deref().unwrap_or("unknown"))).or_default() += 1;
    }
    let alarms: Vec<(String, usize)> = VerdictClass::FALSE_ALARMS
        .iter()
        .map(|c| (c.label().to_string(), assessed.iter().filter(|a| *a == c).count()))
        .collect();
    VerdictStatistics {
        total: verdicts.len(),
        by_kind,
        by_unknown_reason: shares(&reasons.into_iter().collect::<Vec<_>>()),
        by_false_alarm: shares(&alarms),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictClass {
    #[serde(rename = "fault")]
    Fault,
    #[serde(rename = "false_alarm:environment")]
    FalseAlarmEnvironment,
    #[serde(rename = "false_alarm:requirement_spec")]
    FalseAlarmRequirementSpec,
    #[serde(rename = "false_alarm:verifier")]
    FalseAlarmVerifier,
    #[serde(rename = "false_alarm:other")]
    FalseAlarmOther,
}

impl VerdictClass {
    pub const FALSE_ALARMS: [VerdictClass; 4] = [
        VerdictClass::FalseAlarmEnvironment,
        VerdictClass::FalseAlarmVerifier,
        VerdictClass::FalseAlarmOther,
        VerdictClass::FalseAlarmRequirementSpec,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VerdictClass::Fault => "fault",
            VerdictClass::FalseAlarmEnvironment => "false_alarm:environment",
            VerdictClass::FalseAlarmRequirementSpec => "false_alarm:requirement_spec",
            VerdictClass::FalseAlarmVerifier => "false_alarm:verifier",
            VerdictClass::FalseAlarmOther => "false_alarm:other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignatureItem {
    pub function: String,
    pub text: String,
}

/// What a mark matches: a trace projection or a normalized failure reason.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signature {
    Trace(Vec<SignatureItem>),
    Failure(String),
}

impl Signature {
    pub fn is_empty(&self) -> bool {
        match self {
            Signature::Trace(items) => items.is_empty(),
            Signature::Failure(s) => s.is_empty(),
        }
    }
}

/// Relevant events as `(function, note or assert text)`.
pub fn mark_signature(trace: &ErrorTrace) -> Signature {
    Signature::Trace(
        trace
            .events
            .iter()
            .filter(|e| e.relevant)
            .map(|e| SignatureItem {
                function: e.function.clone(),
                text: e.assert_desc.clone().or_else(|| e.note.clone()).unwrap_or_default(),
            })
            .collect(),
    )
}

/// Failure reason without hex addresses and digits, whitespace collapsed.
pub fn normalize_failure(reason: &str) -> String {
    static HEX: OnceLock<Regex> = OnceLock::new();
    let hex = HEX.get_or_init(|| Regex::new(r"0[xX][0-9a-fA-F]+").unwrap());
    let stripped: String = hex.replace_all(reason, "").chars().filter(|c| !c.is_ascii_digit()).collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn failure_signature(reason: &str) -> Signature {
    Signature::Failure(normalize_failure(reason))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkRevision {
    pub revision: usize,
    pub verdict_class: VerdictClass,
    pub description: String,
    pub tags: Vec<String>,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mark {
    pub id: u64,
    pub verdict_class: VerdictClass,
    pub description: String,
    pub tags: Vec<String>,
    pub signature: Signature,
    /// Every revision including the current one, oldest first.
    pub history: Vec<MarkRevision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssessmentMode {
    Manual,
    Automatic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assessment {
    pub task_id: String,
    pub mark_id: u64,
    pub mode: AssessmentMode,
}

/// One automatic assessment per mark with the trace's signature.
pub fn auto_assess(task_id: &str, signature: &Signature, marks: &[Mark]) -> Vec<Assessment> {
    marks
        .iter()
        .filter(|m| !signature.is_empty() && m.signature == *signature)
        .map(|m| Assessment {
            task_id: task_id.to_string(),
            mark_id: m.id,
            mode: AssessmentMode::Automatic,
        })
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarkError {
    #[error("unknown mark {0}")]
    UnknownMark(u64),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("mark signature is empty")]
    EmptySignature,
    #[error("task {0} already has a manual assessment by mark {1}")]
    DuplicateManual(String, u64),
}

/// Fields of a new mark or of a mark edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkDraft {
    pub verdict_class: VerdictClass,
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    pub signature: Signature,
}

/// Marks, task signatures and the assessments linking them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkStore {
    pub marks: BTreeMap<u64, Mark>,
    /// Signature of every known unsafe or failed task.
    pub tasks: BTreeMap<String, Signature>,
    pub assessments: Vec<Assessment>,
    next_id: u64,
}

impl MarkStore {
    fn reassess(&mut self, mark_id: u64) {
        self.assessments
            .retain(|a| !(a.mark_id == mark_id && a.mode == AssessmentMode::Automatic));
        let mark = &self.marks[&mark_id];
        let mut fresh = Vec::new();
        for (task, sig) in &self.tasks {
            let manual = self.assessments.iter().any(|a| &a.task_id == task && a.mark_id == mark_id);
            if manual {
                continue;
            }
            fresh.extend(auto_assess(task, sig, std::slice::from_ref(mark)));
        }
        self.assessments.extend(fresh);
    }

    /// Create a mark and assess all known tasks with it.
    pub fn create(&mut self, draft: MarkDraft) -> Result<&Mark, MarkError> {
        if draft.signature.is_empty() {
            return Err(MarkError::EmptySignature);
        }
        self.next_id += 1;
        let id = self.next_id;
        let rev = MarkRevision {
            revision: 1,
            verdict_class: draft.verdict_class,
            description: draft.description.clone(),
            tags: draft.tags.clone(),
            signature: draft.signature.clone(),
        };
        self.marks.insert(
            id,
            Mark {
                id,
                verdict_class: draft.verdict_class,
                description: draft.description,
                tags: draft.tags,
                signature: draft.signature,
                history: vec![rev],
            },
        );
        self.reassess(id);
        Ok(&self.marks[&id])
    }

    /// Edit a mark, appending a revision. Automatic assessments are
    /// recomputed; tasks that no longer match become unassociated.
    pub fn update(&mut self, id: u64, draft: MarkDraft) -> Result<&Mark, MarkError> {
        if draft.signature.is_empty() {
            return Err(MarkError::EmptySignature);
        }
        let m = self.marks.get_mut(&id).ok_or(MarkError::UnknownMark(id))?;
        m.history.push(MarkRevision {
            revision: m.history.len() + 1,
            verdict_class: draft.verdict_class,
            description: draft.description.clone(),
            tags: draft.tags.clone(),
            signature: draft.signature.clone(),
        });
        m.verdict_class = draft.verdict_class;
        m.description = draft.description;
        m.tags = draft.tags;
        m.signature = draft.signature;
        self.reassess(id);
        Ok(&self.marks[&id])
    }

    /// Record a task's signature and return its new automatic assessments.
    pub fn add_task(&mut self, task_id: &str, signature: Signature) -> Vec<Assessment> {
        self.assessments
            .retain(|a| !(a.task_id == task_id && a.mode == AssessmentMode::Automatic));
        let marks: Vec<Mark> = self.marks.values().cloned().collect();
        let fresh = auto_assess(task_id, &signature, &marks);
        self.tasks.insert(task_id.to_string(), signature);
        self.assessments.extend(fresh.iter().cloned());
        fresh
    }

    /// Assess a task by a mark explicitly. Replaces an automatic assessment
    /// by the same mark.
    pub fn assess_manually(&mut self, task_id: &str, mark_id: u64) -> Result<Assessment, MarkError> {
        if !self.marks.contains_key(&mark_id) {
            return Err(MarkError::UnknownMark(mark_id));
        }
        if !self.tasks.contains_key(task_id) {
            return Err(MarkError::UnknownTask(task_id.to_string()));
        }
        let a = Assessment {
            task_id: task_id.to_string(),
            mark_id,
            mode: AssessmentMode::Manual,
        };
        if self.assessments.contains(&a) {
            return Err(MarkError::DuplicateManual(task_id.to_string(), mark_id));
        }
        self.assessments
            .retain(|x| !(x.task_id == task_id && x.mark_id == mark_id));
        self.assessments.push(a.clone());
        Ok(a)
    }

    pub fn associations(&self, mark_id: u64) -> Vec<&Assessment> {
        self.assessments.iter().filter(|a| a.mark_id == mark_id).collect()
    }

    /// Verdict classes of all assessed tasks, one per task (manual first,
    /// then the lowest mark id).
    pub fn task_classes(&self) -> BTreeMap<String, VerdictClass> {
        let mut out = BTreeMap::new();
        let mut ordered: Vec<&Assessment> = self.assessments.iter().collect();
        ordered.sort_by_key(|a| (a.mode == AssessmentMode::Automatic, a.mark_id));
        for a in ordered {
            if let Some(m) = self.marks.get(&a.mark_id) {
                out.entry(a.task_id.clone()).or_insert(m.verdict_class);
            }
        }
        out
    }
}
