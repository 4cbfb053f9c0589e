//! Program fragment generation.
//!
//! The pipeline is: file graph, decomposition tactic, optional refinement with
//! a decomposition specification, target resolution, then composition of each
//! target fragment with helper fragments.

use crate::buildbase::{build_file_graph, BuildBase, FileGraph};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PfgError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no target fragments; unmatched patterns: {}", .0.join(", "))]
    Target(Vec<String>),
    #[error("decomposition specification error: cannot resolve {0:?}")]
    Spec(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProgramFragment {
    pub name: String,
    pub files: BTreeSet<String>,
    #[serde(default)]
    pub is_target: bool,
}

impl ProgramFragment {
    pub fn new(name: impl Into<String>, files: impl IntoIterator<Item = String>) -> Self {
        ProgramFragment {
            name: name.into(),
            files: files.into_iter().collect(),
            is_target: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentGraph {
    pub fragments: BTreeMap<String, ProgramFragment>,
    pub edges: BTreeSet<(String, String)>,
}

impl FragmentGraph {
    /// Build a graph from fragments, computing call edges from the callgraph.
    /// Fragments with no files are dropped.
    pub fn new(fragments: impl IntoIterator<Item = ProgramFragment>, base: &BuildBase) -> Self {
        let mut g = FragmentGraph {
            fragments: fragments
                .into_iter()
                .filter(|f| !f.files.is_empty())
                .map(|f| (f.name.clone(), f))
                .collect(),
            edges: BTreeSet::new(),
        };
        g.recompute_edges(base);
        g
    }

    pub fn recompute_edges(&mut self, base: &BuildBase) {
        let mut file_of_fragment: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for f in self.fragments.values() {
            for file in &f.files {
                file_of_fragment.entry(file).or_default().push(&f.name);
            }
        }
        let mut edges = BTreeSet::new();
        for call in &base.callgraph.calls {
            let Some(callers) = file_of_fragment.get(call.file.as_str()) else {
                continue;
            };
            for def in base.callgraph.definitions_of(&call.callee) {
                if def.is_static && def.file != call.file {
                    continue;
                }
                let Some(callees) = file_of_fragment.get(def.file.as_str()) else {
                    continue;
                };
                for a in callers {
                    for b in callees {
                        if a != b {
                            edges.insert((a.to_string(), b.to_string()));
                        }
                    }
                }
            }
        }
        self.edges = edges;
    }
}

pub type Options = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfgConfig {
    pub decomposition_tactic: String,
    #[serde(default)]
    pub composition_tactic: Option<String>,
    pub targets: Vec<String>,
    #[serde(default)]
    pub tactic_options: Options,
    /// Selects the entry of a version-keyed decomposition specification.
    #[serde(default)]
    pub program_version: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionSpec {
    #[serde(skip)]
    pub version: String,
    #[serde(default)]
    pub fragments: BTreeMap<String, Vec<String>>,
    #[serde(default, rename = "add to all fragments")]
    pub add_all: Vec<String>,
    #[serde(default, rename = "exclude from all fragments")]
    pub exclude_all: Vec<String>,
}

impl DecompositionSpec {
    /// Parse a version-keyed specification document. A bare `"ver": {...}`
    /// member without surrounding braces is accepted too. With no `version`
    /// the document must hold exactly one entry.
    pub fn from_json(text: &str, version: Option<&str>) -> Result<Self, PfgError> {
        let trimmed = text.trim();
        let doc: BTreeMap<String, Value> = if trimmed.starts_with('"') {
            serde_json::from_str(&format!("{{{trimmed}}}"))
        } else {
            serde_json::from_str(trimmed)
        }
        .map_err(|e| PfgError::Config(format!("decomposition specification: {e}")))?;
        let (key, value) = match version {
            Some(v) => doc
                .get_key_value(v)
                .ok_or_else(|| PfgError::Config(format!("no decomposition specification for version {v}")))?,
            None if doc.len() == 1 => doc.iter().next().unwrap(),
            None => {
                return Err(PfgError::Config(
                    "decomposition specification holds several versions; program_version is required".into(),
                ))
            }
        };
        let mut spec: DecompositionSpec = serde_json::from_value(value.clone())
            .map_err(|e| PfgError::Config(format!("decomposition specification {key}: {e}")))?;
        spec.version = key.clone();
        Ok(spec)
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty() && self.add_all.is_empty() && self.exclude_all.is_empty()
    }
}

/// Compile a pattern as an anchored full-match regular expression.
pub fn full_match(pattern: &str) -> Result<Regex, PfgError> {
    Regex::new(&format!("^(?:{pattern})$")).map_err(|e| PfgError::Config(format!("pattern {pattern:?}: {e}")))
}

fn opt_str<'a>(options: &'a Options, key: &str) -> Option<&'a str> {
    options.get(key).and_then(Value::as_str)
}

fn opt_bool(options: &Options, key: &str) -> bool {
    options.get(key).and_then(Value::as_bool).unwrap_or(false)
}

fn opt_list(options: &Options, key: &str) -> Option<Vec<String>> {
    options.get(key).and_then(Value::as_array).map(|a| {
        a.iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect()
    })
}

pub type DecompositionTactic = fn(&BuildBase, &FileGraph, &Options) -> Result<FragmentGraph, PfgError>;
pub type CompositionTactic =
    fn(&ProgramFragment, &FragmentGraph, &BuildBase, &Options) -> Vec<ProgramFragment>;

pub fn decomposition_tactic(name: &str) -> Option<DecompositionTactic> {
    match name {
        "linker" => Some(linker_tactic),
        "closure" => Some(closure_tactic),
        "per_file" => Some(per_file_tactic),
        "whole" => Some(whole_tactic),
        _ => None,
    }
}

pub fn composition_tactic(name: &str) -> Option<CompositionTactic> {
    match name {
        "greedy" | "library" => Some(greedy_composition),
        "none" => Some(|_, _, _, _| Vec::new()),
        _ => None,
    }
}

/// One fragment per selected LD/AR output holding the sources of every CC
/// command reachable backwards from it.
///
/// Option `suffixes` overrides the default output suffixes.
pub fn linker_tactic(base: &BuildBase, _fg: &FileGraph, options: &Options) -> Result<FragmentGraph, PfgError> {
    let suffixes = opt_list(options, "suffixes")
        .unwrap_or_else(|| vec![".ko".into(), "built-in.o".into(), "built-in.a".into()]);
    let fragments = base
        .ld_commands
        .iter()
        .filter(|l| suffixes.iter().any(|s| l.output.ends_with(s.as_str())))
        .map(|l| ProgramFragment::new(l.output.clone(), base.sources_of_link(&l.id)));
    Ok(FragmentGraph::new(fragments, base))
}

/// Fragments built around entry functions matching a name pattern.
///
/// Options: `entry_pattern` (regex, default `(.*)_main`; capture group 1 names
/// the fragment), `library_dir` (default `libbb`), `include_library`.
pub fn closure_tactic(base: &BuildBase, fg: &FileGraph, options: &Options) -> Result<FragmentGraph, PfgError> {
    let pattern = opt_str(options, "entry_pattern").unwrap_or("(.*)_main");
    let re = full_match(pattern)?;
    let lib_dir = opt_str(options, "library_dir").unwrap_or("libbb").trim_end_matches('/');
    let in_lib = |f: &str| f.starts_with(lib_dir) && f[lib_dir.len()..].starts_with('/');
    let library: BTreeSet<String> = fg.nodes.iter().filter(|f| in_lib(f)).cloned().collect();

    let mut fragments = Vec::new();
    for def in &base.callgraph.definitions {
        let Some(caps) = re.captures(&def.name) else {
            continue;
        };
        if in_lib(&def.file) || !fg.nodes.contains(&def.file) {
            continue;
        }
        let name = caps.get(1).map_or(def.name.as_str(), |m| m.as_str()).to_string();
        let mut files: BTreeSet<String> = reachable_files(fg, &def.file, &|f| !in_lib(f));
        if opt_bool(options, "include_library") {
            files.extend(library.iter().cloned());
        }
        fragments.push(ProgramFragment {
            name,
            files,
            is_target: false,
        });
    }
    if fragments.is_empty() {
        return Err(PfgError::Target(vec![pattern.to_string()]));
    }
    if !library.is_empty() {
        fragments.push(ProgramFragment::new(lib_dir, library));
    }
    Ok(FragmentGraph::new(fragments, base))
}

/// Files reachable from `start` over file graph edges, visiting only files
/// accepted by `keep`.
pub fn reachable_files(fg: &FileGraph, start: &str, keep: &dyn Fn(&str) -> bool) -> BTreeSet<String> {
    let mut seen = BTreeSet::from([start.to_string()]);
    let mut queue = VecDeque::from([start.to_string()]);
    while let Some(f) = queue.pop_front() {
        for (from, to) in fg.edges.keys() {
            if *from == f && keep(to) && seen.insert(to.clone()) {
                queue.push_back(to.clone());
            }
        }
    }
    seen
}

/// Every compiled file is its own fragment.
pub fn per_file_tactic(base: &BuildBase, fg: &FileGraph, _options: &Options) -> Result<FragmentGraph, PfgError> {
    Ok(FragmentGraph::new(
        fg.nodes.iter().map(|f| ProgramFragment::new(f.clone(), [f.clone()])),
        base,
    ))
}

/// The whole program as one fragment named by option `name` (default `program`).
pub fn whole_tactic(base: &BuildBase, fg: &FileGraph, options: &Options) -> Result<FragmentGraph, PfgError> {
    let name = opt_str(options, "name").unwrap_or("program");
    Ok(FragmentGraph::new([ProgramFragment::new(name, fg.nodes.iter().cloned())], base))
}

/// Resolve a specification entry to files: a fragment name, a file, a
/// directory, a function name, or finally a regular expression over files.
fn resolve_entry(entry: &str, graph: &FragmentGraph, base: &BuildBase) -> Result<BTreeSet<String>, PfgError> {
    if let Some(f) = graph.fragments.get(entry) {
        return Ok(f.files.clone());
    }
    let files = base.compiled_files();
    if files.contains(entry) {
        return Ok(BTreeSet::from([entry.to_string()]));
    }
    let dir = format!("{}/", entry.trim_end_matches('/'));
    let under: BTreeSet<String> = files.iter().filter(|f| f.starts_with(&dir)).map(|f| f.to_string()).collect();
    if !under.is_empty() {
        return Ok(under);
    }
    let defining: BTreeSet<String> = base
        .callgraph
        .definitions_of(entry)
        .filter(|d| files.contains(d.file.as_str()))
        .map(|d| d.file.clone())
        .collect();
    if !defining.is_empty() {
        return Ok(defining);
    }
    if let Ok(re) = full_match(entry) {
        let matched: BTreeSet<String> = files.iter().filter(|f| re.is_match(f)).map(|f| f.to_string()).collect();
        if !matched.is_empty() {
            return Ok(matched);
        }
    }
    Err(PfgError::Spec(entry.to_string()))
}

/// Apply a decomposition specification to automatically generated fragments.
pub fn refine_fragments(
    graph: &FragmentGraph,
    spec: &DecompositionSpec,
    base: &BuildBase,
) -> Result<FragmentGraph, PfgError> {
    if spec.is_empty() {
        return Ok(graph.clone());
    }
    let mut fragments = graph.fragments.clone();
    for (name, entries) in &spec.fragments {
        let mut files = BTreeSet::new();
        for e in entries {
            files.extend(resolve_entry(e, graph, base)?);
        }
        let is_target = fragments.get(name).is_some_and(|f| f.is_target);
        fragments.insert(
            name.clone(),
            ProgramFragment {
                name: name.clone(),
                files,
                is_target,
            },
        );
    }
    let mut add = BTreeSet::new();
    for e in &spec.add_all {
        add.extend(resolve_entry(e, graph, base)?);
    }
    let mut exclude = BTreeSet::new();
    for e in &spec.exclude_all {
        exclude.extend(resolve_entry(e, graph, base)?);
    }
    for f in fragments.values_mut() {
        f.files.extend(add.iter().cloned());
        f.files.retain(|file| !exclude.contains(file));
    }
    Ok(FragmentGraph::new(fragments.into_values(), base))
}

/// Target files per pattern plus the patterns that matched nothing.
///
/// A pattern matches a file path, a directory containing the file, a function
/// defined in the file, or a fragment name (marking all of its files).
pub fn resolve_target_files(
    patterns: &[String],
    graph: &FragmentGraph,
    base: &BuildBase,
) -> Result<(BTreeSet<String>, Vec<String>), PfgError> {
    let files = base.compiled_files();
    let mut targets = BTreeSet::new();
    let mut unmatched = Vec::new();
    for p in patterns {
        let re = full_match(p.trim_end_matches('/'))?;
        let mut hit = BTreeSet::new();
        for f in &files {
            let mut dirs = f.match_indices('/').map(|(i, _)| &f[..i]);
            if re.is_match(f) || dirs.any(|d| re.is_match(d)) {
                hit.insert(f.to_string());
            }
        }
        for d in &base.callgraph.definitions {
            if re.is_match(&d.name) && files.contains(d.file.as_str()) {
                hit.insert(d.file.clone());
            }
        }
        for frag in graph.fragments.values() {
            if re.is_match(&frag.name) {
                hit.extend(frag.files.iter().cloned());
            }
        }
        if hit.is_empty() {
            unmatched.push(p.clone());
        }
        targets.extend(hit);
    }
    Ok((targets, unmatched))
}

/// Mark every fragment containing a target file.
pub fn resolve_targets(graph: &FragmentGraph, conf: &PfgConfig, base: &BuildBase) -> Result<FragmentGraph, PfgError> {
    let (targets, _) = resolve_target_files(&conf.targets, graph, base)?;
    let mut out = graph.clone();
    for f in out.fragments.values_mut() {
        f.is_target = f.files.iter().any(|file| targets.contains(file));
    }
    Ok(out)
}

/// Names of functions called from `files` that no definition inside `files`
/// satisfies. Static definitions only satisfy calls from their own file.
pub fn undefined_calls(files: &BTreeSet<String>, base: &BuildBase) -> BTreeSet<String> {
    let cg = &base.callgraph;
    let mut out = BTreeSet::new();
    for call in cg.calls.iter().filter(|c| files.contains(&c.file)) {
        let satisfied = cg
            .definitions_of(&call.callee)
            .any(|d| files.contains(&d.file) && (!d.is_static || d.file == call.file));
        if !satisfied {
            out.insert(call.callee.clone());
        }
    }
    out
}

/// Repeatedly add the fragment defining the most still-undefined functions.
///
/// Option `max_fragments` bounds the number of added fragments (default 3).
/// Ties go to the lexicographically smaller fragment name.
pub fn greedy_composition(
    target: &ProgramFragment,
    graph: &FragmentGraph,
    base: &BuildBase,
    options: &Options,
) -> Vec<ProgramFragment> {
    let limit = options
        .get("max_fragments")
        .and_then(Value::as_u64)
        .unwrap_or(3) as usize;
    let mut union = target.files.clone();
    let mut added: Vec<ProgramFragment> = Vec::new();
    while added.len() < limit {
        let missing = undefined_calls(&union, base);
        let mut best: Option<(usize, &ProgramFragment)> = None;
        for cand in graph.fragments.values() {
            if cand.name == target.name || added.iter().any(|a| a.name == cand.name) {
                continue;
            }
            let provides = missing
                .iter()
                .filter(|name| {
                    base.callgraph
                        .definitions_of(name)
                        .any(|d| !d.is_static && cand.files.contains(&d.file) && !union.contains(&d.file))
                })
                .count();
            // Iteration is in name order, so a strict comparison keeps the smaller name on ties.
            if provides > 0 && best.is_none_or(|(score, _)| provides > score) {
                best = Some((provides, cand));
            }
        }
        let Some((_, pick)) = best else { break };
        union.extend(pick.files.iter().cloned());
        let mut pick = pick.clone();
        pick.is_target = false;
        added.push(pick);
    }
    added
}

/// Run the whole decomposition and return the composed target fragments.
pub fn decompose(
    conf: &PfgConfig,
    base: &BuildBase,
    spec: Option<&DecompositionSpec>,
) -> Result<Vec<ProgramFragment>, PfgError> {
    let tactic = decomposition_tactic(&conf.decomposition_tactic)
        .ok_or_else(|| PfgError::Config(format!("unknown decomposition tactic {:?}", conf.decomposition_tactic)))?;
    let composition = match conf.composition_tactic.as_deref() {
        None => None,
        Some(name) => Some(
            composition_tactic(name)
                .ok_or_else(|| PfgError::Config(format!("unknown composition tactic {name:?}")))?,
        ),
    };
    if conf.targets.is_empty() {
        return Err(PfgError::Target(Vec::new()));
    }

    let file_graph = build_file_graph(base);
    let mut graph = tactic(base, &file_graph, &conf.tactic_options)?;
    if let Some(spec) = spec {
        graph = refine_fragments(&graph, spec, base)?;
    }
    let (_, unmatched) = resolve_target_files(&conf.targets, &graph, base)?;
    let graph = resolve_targets(&graph, conf, base)?;

    let mut out = Vec::new();
    for fragment in graph.fragments.values().filter(|f| f.is_target) {
        let mut composed = fragment.clone();
        if let Some(compose) = composition {
            for extra in compose(fragment, &graph, base, &conf.tactic_options) {
                composed.files.extend(extra.files);
            }
        }
        out.push(composed);
    }
    if out.is_empty() {
        let patterns = if unmatched.is_empty() { conf.targets.clone() } else { unmatched };
        return Err(PfgError::Target(patterns));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buildbase::{CallSite, Callgraph, CompileCommand, FunctionDef, LinkCommand, LinkKind};

    pub(crate) fn def(name: &str, file: &str, is_static: bool) -> FunctionDef {
        FunctionDef {
            name: name.into(),
            file: file.into(),
            line: 1,
            is_static,
            return_type: "int".into(),
            params: vec![],
        }
    }

    fn call(caller: &str, callee: &str, file: &str) -> CallSite {
        CallSite {
            caller: caller.into(),
            callee: callee.into(),
            file: file.into(),
            line: 1,
        }
    }

    fn base(files: &[&str], defs: Vec<FunctionDef>, calls: Vec<CallSite>, ld: Vec<(&str, Vec<&str>)>) -> BuildBase {
        let cc = files
            .iter()
            .enumerate()
            .map(|(i, f)| CompileCommand {
                id: format!("cc{i}"),
                input: f.to_string(),
                output: f.replace(".c", ".o"),
                options: vec![],
            })
            .collect();
        let ld = ld
            .into_iter()
            .enumerate()
            .map(|(i, (out, ins))| LinkCommand {
                id: format!("ld{i}"),
                inputs: ins.into_iter().map(str::to_string).collect(),
                output: out.into(),
                kind: LinkKind::Ld,
            })
            .collect();
        BuildBase {
            root_dir: ".".into(),
            cc_commands: cc,
            ld_commands: ld,
            source_files: files.iter().map(|f| f.to_string()).collect(),
            callgraph: Callgraph {
                definitions: defs,
                calls,
            },
            line_counts: BTreeMap::new(),
            provenance: String::new(),
        }
    }

    fn conf(tactic: &str, composition: Option<&str>, targets: &[&str]) -> PfgConfig {
        PfgConfig {
            decomposition_tactic: tactic.into(),
            composition_tactic: composition.map(str::to_string),
            targets: targets.iter().map(|t| t.to_string()).collect(),
            tactic_options: Options::new(),
            program_version: None,
        }
    }

    #[test]
    fn single_file_program_without_composition() {
        let b = base(&["main.c"], vec![def("main", "main.c", false)], vec![], vec![]);
        let out = decompose(&conf("per_file", None, &["main.c"]), &b, None).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].files, BTreeSet::from(["main.c".to_string()]));
        assert!(out[0].is_target);
    }

    #[test]
    fn unmatched_target_pattern_is_an_error() {
        let b = base(&["main.c"], vec![def("main", "main.c", false)], vec![], vec![]);
        let err = decompose(&conf("per_file", None, &["nonexistent_.*"]), &b, None).unwrap_err();
        assert_eq!(err, PfgError::Target(vec!["nonexistent_.*".into()]));
    }

    #[test]
    fn unknown_tactic_is_a_config_error() {
        let b = base(&["main.c"], vec![], vec![], vec![]);
        assert!(matches!(
            decompose(&conf("magic", None, &["main.c"]), &b, None),
            Err(PfgError::Config(_))
        ));
        assert!(matches!(
            decompose(&conf("whole", Some("magic"), &["main.c"]), &b, None),
            Err(PfgError::Config(_))
        ));
    }

    #[test]
    fn linker_tactic_collects_reachable_sources() {
        let b = base(
            &["a.c", "b.c", "c.c"],
            vec![],
            vec![],
            vec![("m1.ko", vec!["a.o", "b.o"]), ("prog", vec!["c.o"])],
        );
        let g = linker_tactic(&b, &build_file_graph(&b), &Options::new()).unwrap();
        assert_eq!(g.fragments.keys().collect::<Vec<_>>(), vec!["m1.ko"]);
        assert_eq!(g.fragments["m1.ko"].files.len(), 2);
    }

    #[test]
    fn linker_tactic_with_archive_suffix() {
        let mut b = base(&["a.c", "b.c"], vec![], vec![], vec![("lib/built-in.a", vec!["a.o"])]);
        b.ld_commands[0].kind = LinkKind::Ar;
        let mut opts = Options::new();
        opts.insert("suffixes".into(), serde_json::json!(["built-in.a"]));
        let g = linker_tactic(&b, &build_file_graph(&b), &opts).unwrap();
        assert_eq!(g.fragments["lib/built-in.a"].files, BTreeSet::from(["a.c".to_string()]));
    }

    #[test]
    fn linker_tactic_without_links_is_empty() {
        let b = base(&["a.c"], vec![], vec![], vec![]);
        assert!(linker_tactic(&b, &build_file_graph(&b), &Options::new())
            .unwrap()
            .fragments
            .is_empty());
    }

    #[test]
    fn closure_tactic_builds_applet_fragments() {
        let b = base(
            &["tar.c", "common.c", "libbb/x.c", "true.c"],
            vec![
                def("tar_main", "tar.c", false),
                def("common", "common.c", false),
                def("xfunc", "libbb/x.c", false),
                def("true_main", "true.c", false),
            ],
            vec![call("tar_main", "common", "tar.c"), call("common", "xfunc", "common.c")],
            vec![],
        );
        let fg = build_file_graph(&b);
        let g = closure_tactic(&b, &fg, &Options::new()).unwrap();
        let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(g.fragments["tar"].files, set(&["tar.c", "common.c"]));
        assert_eq!(g.fragments["true"].files, set(&["true.c"]));
        assert_eq!(g.fragments["libbb"].files, set(&["libbb/x.c"]));

        let mut opts = Options::new();
        opts.insert("include_library".into(), Value::Bool(true));
        let g = closure_tactic(&b, &fg, &opts).unwrap();
        assert_eq!(g.fragments["tar"].files, set(&["tar.c", "common.c", "libbb/x.c"]));
    }

    #[test]
    fn closure_tactic_without_entry_points_fails() {
        let b = base(&["a.c"], vec![def("f", "a.c", false)], vec![], vec![]);
        assert!(matches!(
            closure_tactic(&b, &build_file_graph(&b), &Options::new()),
            Err(PfgError::Target(_))
        ));
    }

    #[test]
    fn greedy_tie_prefers_smaller_name() {
        let b = base(
            &["t.c", "x.c", "y.c"],
            vec![
                def("t", "t.c", false),
                def("f", "x.c", false),
                def("g", "x.c", false),
                def("f", "y.c", false),
                def("g", "y.c", false),
            ],
            vec![call("t", "f", "t.c"), call("t", "g", "t.c")],
            vec![],
        );
        let g = per_file_tactic(&b, &build_file_graph(&b), &Options::new()).unwrap();
        let added = greedy_composition(&g.fragments["t.c"], &g, &b, &Options::new());
        assert_eq!(added.iter().map(|f| f.name.as_str()).collect::<Vec<_>>(), vec!["x.c"]);
    }

    #[test]
    fn greedy_without_undefined_calls_adds_nothing() {
        let b = base(
            &["t.c", "x.c"],
            vec![def("t", "t.c", false), def("printf_like", "x.c", false)],
            vec![call("t", "printf", "t.c")],
            vec![],
        );
        let g = per_file_tactic(&b, &build_file_graph(&b), &Options::new()).unwrap();
        assert!(greedy_composition(&g.fragments["t.c"], &g, &b, &Options::new()).is_empty());
    }

    #[test]
    fn static_definitions_do_not_satisfy_foreign_calls() {
        let b = base(
            &["t.c", "x.c"],
            vec![def("t", "t.c", false), def("f", "x.c", true)],
            vec![call("t", "f", "t.c")],
            vec![],
        );
        let g = per_file_tactic(&b, &build_file_graph(&b), &Options::new()).unwrap();
        assert!(g.edges.is_empty());
        assert!(greedy_composition(&g.fragments["t.c"], &g, &b, &Options::new()).is_empty());
    }

    #[test]
    fn spec_parsing_accepts_bare_member() {
        let s = DecompositionSpec::from_json(r#""1.0": {"add to all fragments": ["a.c"]}"#, None).unwrap();
        assert_eq!(s.version, "1.0");
        assert_eq!(s.add_all, vec!["a.c"]);
        let multi = r#"{"1": {}, "2": {"exclude from all fragments": ["b.c"]}}"#;
        assert!(DecompositionSpec::from_json(multi, None).is_err());
        assert_eq!(DecompositionSpec::from_json(multi, Some("2")).unwrap().exclude_all, vec!["b.c"]);
    }

    #[test]
    fn unresolvable_spec_entry_is_named() {
        let b = base(&["a.c"], vec![], vec![], vec![]);
        let g = per_file_tactic(&b, &build_file_graph(&b), &Options::new()).unwrap();
        let spec = DecompositionSpec {
            exclude_all: vec!["nothing_here".into()],
            ..Default::default()
        };
        assert_eq!(refine_fragments(&g, &spec, &b).unwrap_err(), PfgError::Spec("nothing_here".into()));
    }

    #[test]
    fn function_entries_resolve_to_defining_file() {
        let b = base(&["a.c", "b.c"], vec![def("helper", "b.c", false)], vec![], vec![]);
        let g = per_file_tactic(&b, &build_file_graph(&b), &Options::new()).unwrap();
        let spec = DecompositionSpec {
            add_all: vec!["helper".into()],
            ..Default::default()
        };
        let r = refine_fragments(&g, &spec, &b).unwrap();
        assert!(r.fragments["a.c"].files.contains("b.c"));
    }

    #[test]
    fn directory_and_function_targets() {
        let b = base(
            &["drivers/usb/a.c", "drivers/net/b.c", "tar.c"],
            vec![def("tar_main", "tar.c", false)],
            vec![],
            vec![],
        );
        let g = per_file_tactic(&b, &build_file_graph(&b), &Options::new()).unwrap();
        let c = conf("per_file", None, &["drivers/usb"]);
        let r = resolve_targets(&g, &c, &b).unwrap();
        let targets: Vec<_> = r.fragments.values().filter(|f| f.is_target).map(|f| f.name.as_str()).collect();
        assert_eq!(targets, vec!["drivers/usb/a.c"]);
        let c = conf("per_file", None, &["tar_main"]);
        let r = resolve_targets(&g, &c, &b).unwrap();
        assert!(r.fragments["tar.c"].is_target);
        let c = conf("per_file", None, &[".*"]);
        assert!(resolve_targets(&g, &c, &b).unwrap().fragments.values().all(|f| f.is_target));
    }
}
