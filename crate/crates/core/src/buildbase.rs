//! Build base: build commands, source inventory and the function callgraph.
//!
//! A build base is ingested from a directory holding either a `build_base.json`
//! manifest or a `compile_commands.json` database. Every compiled source file
//! is scanned with [`extract_symbols`] to populate the callgraph.

use crate::clex::{self, Token};
use crate::cscan::{self, ItemKind, Param};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fs;
use std::path::{Component, Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BuildBaseError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileCommand {
    pub id: String,
    pub input: String,
    pub output: String,
    #[serde(default)]
    pub options: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LinkKind {
    Ld,
    Ar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCommand {
    pub id: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub kind: LinkKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    pub file: String,
    pub line: usize,
    pub is_static: bool,
    pub return_type: String,
    pub params: Vec<Param>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallSite {
    pub caller: String,
    pub callee: String,
    pub file: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Callgraph {
    /// Sorted by file, then line.
    pub definitions: Vec<FunctionDef>,
    /// One entry per call site, sorted by file, line, caller, callee.
    pub calls: Vec<CallSite>,
}

impl Callgraph {
    pub fn definitions_of<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a FunctionDef> + 'a {
        self.definitions.iter().filter(move |d| d.name == name)
    }

    /// Definitions located in `file`.
    pub fn defined_in<'a>(&'a self, file: &'a str) -> impl Iterator<Item = &'a FunctionDef> + 'a {
        self.definitions.iter().filter(move |d| d.file == file)
    }

    /// The definition a call of `callee` from `file` binds to: a definition in
    /// the same file first, otherwise the first non-static one by path.
    pub fn resolve(&self, callee: &str, file: &str) -> Option<&FunctionDef> {
        let mut defs = self.definitions.iter().filter(|d| d.name == callee);
        defs.clone()
            .find(|d| d.file == file)
            .or_else(|| defs.find(|d| !d.is_static))
    }

    pub fn static_flags(&self) -> BTreeMap<(String, String), bool> {
        self.definitions
            .iter()
            .map(|d| ((d.file.clone(), d.name.clone()), d.is_static))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildBase {
    pub root_dir: PathBuf,
    pub cc_commands: Vec<CompileCommand>,
    pub ld_commands: Vec<LinkCommand>,
    pub source_files: BTreeSet<String>,
    pub callgraph: Callgraph,
    /// Physical line count of every source file.
    #[serde(default)]
    pub line_counts: BTreeMap<String, usize>,
    #[serde(default)]
    pub provenance: String,
}

/// Producer/consumer relation between build commands.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandGraph {
    /// `(producer id, consumer id, file)` for every file passed between commands.
    pub edges: BTreeSet<(String, String, String)>,
}

impl CommandGraph {
    pub fn producers_of(&self, consumer: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter(|(_, c, _)| c == consumer)
            .map(|(p, _, _)| p.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileGraph {
    pub nodes: BTreeSet<String>,
    /// `(caller file, callee file)` to the number of call sites.
    #[serde(with = "edge_list")]
    pub edges: BTreeMap<(String, String), usize>,
}

mod edge_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Edge {
        from: String,
        to: String,
        weight: usize,
    }

    pub fn serialize<S: Serializer>(
        edges: &BTreeMap<(String, String), usize>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        edges
            .iter()
            .map(|((from, to), weight)| Edge {
                from: from.clone(),
                to: to.clone(),
                weight: *weight,
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(String, String), usize>, D::Error> {
        Ok(Vec::<Edge>::deserialize(d)?
            .into_iter()
            .map(|e| ((e.from, e.to), e.weight))
            .collect())
    }
}

impl BuildBase {
    pub fn load(path: &Path) -> Result<Self, BuildBaseError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| BuildBaseError::Config(format!("{}: {e}", path.display())))
    }

    pub fn compiled_files(&self) -> BTreeSet<&str> {
        self.cc_commands.iter().map(|c| c.input.as_str()).collect()
    }

    pub fn read_source(&self, file: &str) -> Result<String, BuildBaseError> {
        read(&self.root_dir.join(file))
    }

    pub fn command_graph(&self) -> CommandGraph {
        let mut producer: BTreeMap<&str, &str> = BTreeMap::new();
        for c in &self.cc_commands {
            producer.insert(&c.output, &c.id);
        }
        for l in &self.ld_commands {
            producer.insert(&l.output, &l.id);
        }
        let mut edges = BTreeSet::new();
        for l in &self.ld_commands {
            for input in &l.inputs {
                if let Some(p) = producer.get(input.as_str()) {
                    edges.insert((p.to_string(), l.id.clone(), input.clone()));
                }
            }
        }
        CommandGraph { edges }
    }

    /// Source files of the CC commands whose outputs flow into link command `ld_id`.
    pub fn sources_of_link(&self, ld_id: &str) -> BTreeSet<String> {
        let by_output: BTreeMap<&str, &LinkCommand> =
            self.ld_commands.iter().map(|l| (l.output.as_str(), l)).collect();
        let cc_by_output: BTreeMap<&str, &CompileCommand> =
            self.cc_commands.iter().map(|c| (c.output.as_str(), c)).collect();
        let mut files = BTreeSet::new();
        let Some(start) = self.ld_commands.iter().find(|l| l.id == ld_id) else {
            return files;
        };
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(cmd) = queue.pop_front() {
            if !seen.insert(cmd.id.as_str()) {
                continue;
            }
            for input in &cmd.inputs {
                if let Some(cc) = cc_by_output.get(input.as_str()) {
                    files.insert(cc.input.clone());
                } else if let Some(ld) = by_output.get(input.as_str()) {
                    queue.push_back(ld);
                }
            }
        }
        files
    }
}

fn read(path: &Path) -> Result<String, BuildBaseError> {
    fs::read_to_string(path).map_err(|source| BuildBaseError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default = "dot")]
    root: String,
    #[serde(default)]
    cc: Vec<ManifestCc>,
    #[serde(default)]
    ld: Vec<ManifestLd>,
}

fn dot() -> String {
    ".".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestCc {
    id: String,
    #[serde(rename = "in")]
    input: String,
    out: String,
    #[serde(default)]
    opts: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLd {
    id: String,
    ins: Vec<String>,
    out: String,
    kind: LinkKind,
}

#[derive(Debug, Deserialize)]
struct CompileDbEntry {
    directory: String,
    file: String,
    #[serde(default)]
    arguments: Option<Vec<String>>,
    #[serde(default)]
    command: Option<String>,
    #[serde(default)]
    output: Option<String>,
}

/// Ingest the build information found in `dir`.
pub fn ingest_build_base(dir: &Path) -> Result<BuildBase, BuildBaseError> {
    let manifest = dir.join("build_base.json");
    let database = dir.join("compile_commands.json");
    let (root, mut cc, mut ld, provenance) = if manifest.is_file() {
        let m: Manifest = serde_json::from_str(&read(&manifest)?)
            .map_err(|e| BuildBaseError::Config(format!("build_base.json: {e}")))?;
        let root = dir.join(&m.root);
        let cc = m
            .cc
            .into_iter()
            .map(|c| CompileCommand {
                id: c.id,
                input: normalize(&c.input),
                output: normalize(&c.out),
                options: c.opts,
            })
            .collect::<Vec<_>>();
        let ld = m
            .ld
            .into_iter()
            .map(|l| LinkCommand {
                id: l.id,
                inputs: l.ins.iter().map(|p| normalize(p)).collect(),
                output: normalize(&l.out),
                kind: l.kind,
            })
            .collect::<Vec<_>>();
        (root, cc, ld, "build_base.json".to_string())
    } else if database.is_file() {
        let entries: Vec<CompileDbEntry> = serde_json::from_str(&read(&database)?)
            .map_err(|e| BuildBaseError::Config(format!("compile_commands.json: {e}")))?;
        let root = dir.to_path_buf();
        let abs_root = fs::canonicalize(&root).unwrap_or_else(|_| root.clone());
        let mut cc = Vec::new();
        for (idx, e) in entries.into_iter().enumerate() {
            cc.push(compile_db_command(idx, e, &abs_root)?);
        }
        (root, cc, Vec::new(), "compile_commands.json".to_string())
    } else {
        return Err(BuildBaseError::Config(format!(
            "{} holds neither build_base.json nor compile_commands.json",
            dir.display()
        )));
    };

    let root = fs::canonicalize(&root).map_err(|source| BuildBaseError::Io {
        path: root.display().to_string(),
        source,
    })?;
    cc.sort_by(|a, b| (&a.input, &a.id).cmp(&(&b.input, &b.id)));
    ld.sort_by(|a, b| (&a.output, &a.id).cmp(&(&b.output, &b.id)));
    validate_commands(&root, &cc, &ld)?;

    let mut source_files = BTreeSet::new();
    let mut line_counts = BTreeMap::new();
    let mut callgraph = Callgraph::default();
    for c in &cc {
        if !source_files.insert(c.input.clone()) {
            continue;
        }
        let text = read(&root.join(&c.input))?;
        line_counts.insert(c.input.clone(), text.lines().count());
        let symbols = extract_symbols(&text).map_err(|e| BuildBaseError::Parse {
            file: c.input.clone(),
            line: e.line,
            message: e.message,
        })?;
        symbols.add_to(&c.input, &mut callgraph);
    }
    callgraph.definitions.sort_by(|a, b| (&a.file, a.line, &a.name).cmp(&(&b.file, b.line, &b.name)));
    callgraph.calls.sort();
    if source_files.is_empty() {
        return Err(BuildBaseError::Config("build base has no compiled sources".into()));
    }
    Ok(BuildBase {
        root_dir: root,
        cc_commands: cc,
        ld_commands: ld,
        source_files,
        callgraph,
        line_counts,
        provenance,
    })
}

fn compile_db_command(
    idx: usize,
    e: CompileDbEntry,
    root: &Path,
) -> Result<CompileCommand, BuildBaseError> {
    let args = match (e.arguments, e.command) {
        (Some(a), _) => a,
        (None, Some(c)) => split_command(&c),
        (None, None) => {
            return Err(BuildBaseError::Config(format!(
                "compile_commands.json entry {idx} has neither arguments nor command"
            )))
        }
    };
    let directory = PathBuf::from(&e.directory);
    let directory = if directory.is_absolute() { directory } else { root.join(directory) };
    let rel = |p: &str| -> Result<String, BuildBaseError> {
        let joined = directory.join(p);
        let joined = PathBuf::from(normalize(&joined.to_string_lossy()));
        joined
            .strip_prefix(root)
            .map(|r| normalize(&r.to_string_lossy()))
            .map_err(|_| BuildBaseError::Integrity(format!("{p} lies outside {}", root.display())))
    };
    let input = rel(&e.file)?;
    let mut options = Vec::new();
    let mut output = e.output.clone();
    let mut iter = args.iter().skip(1).peekable();
    while let Some(a) = iter.next() {
        if a == "-o" {
            output = iter.next().cloned();
        } else if let Some(o) = a.strip_prefix("-o").filter(|o| !o.is_empty()) {
            output = Some(o.to_string());
        } else if normalize(a) == normalize(&e.file) || a.ends_with(&e.file) {
            continue;
        } else {
            options.push(a.clone());
        }
    }
    let output = match output {
        Some(o) => rel(&o)?,
        None => format!("{}.o", input.strip_suffix(".c").unwrap_or(&input)),
    };
    Ok(CompileCommand {
        id: format!("cc{idx}"),
        input,
        output,
        options,
    })
}

fn split_command(cmd: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut any = false;
    let mut chars = cmd.chars();
    while let Some(c) = chars.next() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), '\\') => cur.extend(chars.next()),
            (Some(_), c) => cur.push(c),
            (None, '\'' | '"') => {
                quote = Some(c);
                any = true;
            }
            (None, '\\') => cur.extend(chars.next()),
            (None, c) if c.is_whitespace() => {
                if any || !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                any = false;
            }
            (None, c) => cur.push(c),
        }
    }
    if any || !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Lexically normalize a relative path to forward-slash form.
pub fn normalize(path: &str) -> String {
    let p = Path::new(path);
    let mut parts: Vec<String> = Vec::new();
    let mut absolute = false;
    for comp in p.components() {
        match comp {
            Component::RootDir => absolute = true,
            Component::CurDir => {}
            Component::ParentDir => {
                if parts.last().is_some_and(|l| l != "..") {
                    parts.pop();
                } else if !absolute {
                    parts.push("..".into());
                }
            }
            Component::Normal(s) => parts.push(s.to_string_lossy().into_owned()),
            Component::Prefix(_) => {}
        }
    }
    let joined = parts.join("/");
    if absolute {
        format!("/{joined}")
    } else {
        joined
    }
}

fn validate_commands(root: &Path, cc: &[CompileCommand], ld: &[LinkCommand]) -> Result<(), BuildBaseError> {
    let mut ids = HashSet::new();
    let mut outputs = HashSet::new();
    for c in cc {
        if !ids.insert(c.id.as_str()) {
            return Err(BuildBaseError::Integrity(format!("duplicate command id {}", c.id)));
        }
        if !c.input.ends_with(".c") {
            return Err(BuildBaseError::Integrity(format!("{} is not a C source file", c.input)));
        }
        if !outputs.insert(c.output.as_str()) {
            return Err(BuildBaseError::Integrity(format!("duplicate output {}", c.output)));
        }
        if !root.join(&c.input).is_file() {
            return Err(BuildBaseError::Integrity(c.input.clone()));
        }
    }
    for l in ld {
        if !ids.insert(l.id.as_str()) {
            return Err(BuildBaseError::Integrity(format!("duplicate command id {}", l.id)));
        }
        if l.inputs.is_empty() {
            return Err(BuildBaseError::Integrity(format!("link command {} has no inputs", l.id)));
        }
        if !outputs.insert(l.output.as_str()) {
            return Err(BuildBaseError::Integrity(format!("duplicate output {}", l.output)));
        }
    }
    for l in ld {
        for input in &l.inputs {
            if !outputs.contains(input.as_str()) {
                return Err(BuildBaseError::Integrity(input.clone()));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for SymbolError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for SymbolError {}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalDef {
    pub name: String,
    pub line: usize,
    pub is_static: bool,
    pub return_type: String,
    pub params: Vec<Param>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Symbols {
    pub definitions: Vec<LocalDef>,
    /// `(caller, callee, line)` per call site.
    pub calls: Vec<(String, String, usize)>,
}

impl Symbols {
    pub fn static_flags(&self) -> BTreeMap<String, bool> {
        self.definitions.iter().map(|d| (d.name.clone(), d.is_static)).collect()
    }

    fn add_to(self, file: &str, cg: &mut Callgraph) {
        for d in self.definitions {
            cg.definitions.push(FunctionDef {
                name: d.name,
                file: file.to_string(),
                line: d.line,
                is_static: d.is_static,
                return_type: d.return_type,
                params: d.params,
            });
        }
        for (caller, callee, line) in self.calls {
            cg.calls.push(CallSite {
                caller,
                callee,
                file: file.to_string(),
                line,
            });
        }
    }
}

/// Scan C text for function definitions and the calls made inside them.
pub fn extract_symbols(source: &str) -> Result<Symbols, SymbolError> {
    let lexed = clex::lex(source).map_err(|e| SymbolError {
        line: e.line,
        message: e.message,
    })?;
    let items = cscan::scan_items(&lexed).map_err(|e| SymbolError {
        line: e.line,
        message: e.message,
    })?;
    let toks = &lexed.tokens;
    let typedefs: HashSet<&str> = items
        .iter()
        .filter(|i| i.kind == ItemKind::Type)
        .filter_map(|i| i.name.as_deref())
        .collect();
    let mut out = Symbols::default();
    for item in items.iter().filter(|i| i.kind == ItemKind::Function) {
        let name = item.name.clone().unwrap_or_default();
        let open = item.params_open.expect("function has parameters");
        let params = cscan::parse_params(toks, open);
        let (lb, rb) = item.body.expect("function has a body");
        let mut locals: HashSet<String> = params.iter().filter_map(|p| p.name.clone()).collect();
        collect_locals(&toks[lb + 1..rb], &typedefs, &mut locals);
        for k in lb + 1..rb {
            let t = &toks[k];
            if !t.is_ident() || !toks[k + 1].is_punct("(") {
                continue;
            }
            if clex::is_keyword(&t.text) || locals.contains(&t.text) {
                continue;
            }
            let prev = &toks[k - 1];
            if prev.is_punct(".") || prev.is_punct("->") {
                continue;
            }
            out.calls.push((name.clone(), t.text.clone(), t.line));
        }
        out.definitions.push(LocalDef {
            name,
            line: toks[open - 1].line,
            is_static: item.is_static,
            return_type: cscan::return_type(toks, item),
            params,
        });
    }
    Ok(out)
}

/// Collect variables declared by declaration statements inside a body.
fn collect_locals(body: &[Token], typedefs: &HashSet<&str>, locals: &mut HashSet<String>) {
    let mut stmt_start = true;
    let mut k = 0;
    while k < body.len() {
        let t = &body[k];
        if stmt_start && starts_declaration(body, k, typedefs) {
            let mut end = k;
            let mut depth = 0i32;
            while end < body.len() {
                let e = &body[end];
                if e.is_punct("(") || e.is_punct("[") || e.is_punct("{") {
                    depth += 1;
                } else if e.is_punct(")") || e.is_punct("]") || e.is_punct("}") {
                    depth -= 1;
                } else if e.is_punct(";") && depth == 0 {
                    break;
                }
                end += 1;
            }
            locals.extend(cscan::declarator_names(body, k, end));
            k = end;
            stmt_start = true;
            k += 1;
            continue;
        }
        stmt_start = t.is_punct(";") || t.is_punct("{") || t.is_punct("}");
        k += 1;
    }
}

/// Does a declaration statement begin at `k`?
pub(crate) fn starts_declaration(toks: &[Token], k: usize, typedefs: &HashSet<&str>) -> bool {
    let t = &toks[k];
    if !t.is_ident() {
        return false;
    }
    if clex::is_type_word(&t.text) {
        return true;
    }
    let next = toks.get(k + 1);
    if typedefs.contains(t.text.as_str()) {
        return next.is_some_and(|n| n.is_ident() || n.is_punct("*"));
    }
    // `T name` with an unknown typedef `T`.
    !clex::is_keyword(&t.text)
        && next.is_some_and(|n| n.is_ident() && !clex::is_keyword(&n.text))
        && toks.get(k + 2).is_some_and(|n| {
            n.is_punct(";") || n.is_punct("=") || n.is_punct(",") || n.is_punct("[")
        })
}

/// Build the file graph: one node per compiled file, one weighted edge per
/// ordered pair of distinct files connected by resolved calls.
pub fn build_file_graph(base: &BuildBase) -> FileGraph {
    let nodes: BTreeSet<String> = base.compiled_files().into_iter().map(str::to_string).collect();
    let mut edges = BTreeMap::new();
    for call in &base.callgraph.calls {
        let Some(def) = base.callgraph.resolve(&call.callee, &call.file) else {
            continue;
        };
        if def.file != call.file && nodes.contains(&def.file) && nodes.contains(&call.file) {
            *edges.entry((call.file.clone(), def.file.clone())).or_insert(0) += 1;
        }
    }
    FileGraph { nodes, edges }
}
