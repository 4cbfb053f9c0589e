//! Aspect weaving on preprocessed C and merging of woven sources into a
//! single translation unit.
//!
//! Aspect files hold `around:` advice with a `call` or `execution` pointcut:
//!
//! ```text
//! around: call(void module_put(struct module *module)) {
//!     ldv_module_put(module);
//! }
//! ```
//!
//! Call advice is applied through generated static wrapper functions so that
//! calls keep working inside arbitrary expressions. Execution advice replaces
//! the body of the matching definition. Matching uses the function name and
//! the number of parameters only.

use crate::clex::{self, matching_close, Token, TokenKind};
use crate::cscan::{parse_params, return_type, scan_items, Item, ItemKind, Param, Prototype};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeaveError {
    #[error("aspect line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("source: {0}")]
    Source(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("function {0} is defined in more than one source")]
    Duplicate(String),
    #[error("{file}: {message}")]
    Parse { file: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdviceKind {
    Call,
    Execution,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Advice {
    pub kind: AdviceKind,
    pub signature: Prototype,
    /// Declaration text as written in the aspect file.
    pub declaration: String,
    /// Body including the enclosing braces.
    pub body: String,
    pub line: usize,
}

impl Advice {
    pub fn arity(&self) -> usize {
        self.signature.params.len()
    }

    pub fn describe(&self) -> String {
        let kind = match self.kind {
            AdviceKind::Call => "call",
            AdviceKind::Execution => "execution",
        };
        format!("{kind}({})", clex::normalize_ws(&self.declaration))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeaveReport {
    /// Number of applications per advice, in advice order.
    pub counts: Vec<usize>,
    /// Byte ranges of the input that were replaced, sorted.
    pub ranges: Vec<(usize, usize)>,
}

impl WeaveReport {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn syntax<T>(line: usize, message: impl Into<String>) -> Result<T, WeaveError> {
    Err(WeaveError::Syntax {
        line,
        message: message.into(),
    })
}

/// Parse every `around:` clause of an aspect file.
pub fn parse_aspect(text: &str) -> Result<Vec<Advice>, WeaveError> {
    let lexed = clex::lex(text).map_err(|e| WeaveError::Syntax {
        line: e.line,
        message: e.message,
    })?;
    let toks = &lexed.tokens;
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let t = &toks[i];
        if t.kind == TokenKind::Directive {
            i += 1;
            continue;
        }
        if !t.is_ident() || !toks.get(i + 1).is_some_and(|c| c.is_punct(":")) {
            return syntax(t.line, format!("expected an advice, found '{}'", t.text));
        }
        if t.text != "around" {
            return syntax(t.line, format!("unsupported advice kind '{}', only around is supported", t.text));
        }
        let line = t.line;
        let kind = match toks.get(i + 2).map(|t| t.text.as_str()) {
            Some("call") => AdviceKind::Call,
            Some("execution") => AdviceKind::Execution,
            Some(other) => return syntax(line, format!("unsupported pointcut '{other}'")),
            None => return syntax(line, "missing pointcut"),
        };
        let open = i + 3;
        if !toks.get(open).is_some_and(|t| t.is_punct("(")) {
            return syntax(line, "expected '(' after the pointcut");
        }
        // The declaration ends at the matching ')'. A pointcut left open is
        // closed implicitly by the body brace once the parameter list is done.
        let mut depth = 0usize;
        let mut params_closed = false;
        let mut k = open;
        let (decl_end, body_open) = loop {
            let Some(t) = toks.get(k) else {
                return syntax(line, "unterminated pointcut");
            };
            if t.is_punct("(") {
                depth += 1;
            } else if t.is_punct(")") {
                depth -= 1;
                if depth == 0 {
                    break (k, k + 1);
                }
                if depth == 1 {
                    params_closed = true;
                }
            } else if t.is_punct("{") && depth == 1 && params_closed {
                break (k, k);
            }
            k += 1;
        };
        if !toks.get(body_open).is_some_and(|t| t.is_punct("{")) {
            return syntax(line, "expected '{' starting the advice body");
        }
        let Some(body_close) = matching_close(toks, body_open) else {
            return syntax(line, "unbalanced advice body");
        };
        let declaration = text[toks[open].end..toks[decl_end].start].trim().to_string();
        let signature = crate::cscan::parse_prototype(&declaration)
            .map_err(|e| WeaveError::Syntax { line, message: e })?;
        out.push(Advice {
            kind,
            signature,
            declaration,
            body: text[toks[body_open].start..toks[body_close].end].to_string(),
            line,
        });
        i = body_close + 1;
    }
    Ok(out)
}

fn param_decl(p: &Param, name: &str) -> String {
    if let Some(pos) = p.ty.find("(*") {
        format!("{}{name}{}", &p.ty[..pos + 2], &p.ty[pos + 2..])
    } else if p.ty.ends_with('*') {
        format!("{}{name}", p.ty)
    } else {
        format!("{} {name}", p.ty)
    }
}

/// Rename identifiers of `body` per `map`, leaving member accesses alone.
fn rename_idents(body: &str, map: &HashMap<String, String>) -> String {
    let Ok(lexed) = clex::lex(body) else {
        return body.to_string();
    };
    let mut out = String::new();
    let mut at = 0;
    for (k, t) in lexed.tokens.iter().enumerate() {
        if !t.is_ident() || is_member(&lexed.tokens, k) {
            continue;
        }
        if let Some(new) = map.get(&t.text) {
            out.push_str(&body[at..t.start]);
            out.push_str(new);
            at = t.end;
        }
    }
    out.push_str(&body[at..]);
    out
}

fn is_member(toks: &[Token], k: usize) -> bool {
    k > 0 && (toks[k - 1].is_punct(".") || toks[k - 1].is_punct("->"))
}

/// Number of arguments of the call whose `(` is at `open`.
fn call_arity(toks: &[Token], open: usize, close: usize) -> usize {
    if close == open + 1 {
        return 0;
    }
    let mut n = 1;
    let mut k = open + 1;
    while k < close {
        let t = &toks[k];
        if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
            k = matching_close(toks, k).unwrap_or(close);
        } else if t.is_punct(",") {
            n += 1;
        }
        k += 1;
    }
    n
}

fn normalized_type(ty: &str) -> String {
    clex::lex(ty).map(|l| clex::join_tokens(&l.tokens)).unwrap_or_else(|_| clex::normalize_ws(ty))
}

/// Apply advice to a preprocessed source.
pub fn weave(source: &str, advice: &[Advice]) -> Result<(String, WeaveReport), WeaveError> {
    let mut report = WeaveReport {
        counts: vec![0; advice.len()],
        ranges: Vec::new(),
    };
    if advice.is_empty() {
        return Ok((source.to_string(), report));
    }
    let lexed = clex::lex(source).map_err(|e| WeaveError::Source(e.to_string()))?;
    let toks = &lexed.tokens;
    let items = scan_items(&lexed).map_err(|e| WeaveError::Source(e.to_string()))?;

    // Wrapper names, unique per advice.
    let mut wrappers: Vec<String> = Vec::new();
    let mut used: HashSet<String> = HashSet::new();
    for a in advice {
        let mut name = format!("ldv_around_{}", a.signature.name);
        let mut n = 1;
        while !used.insert(name.clone()) {
            name = format!("ldv_around_{}_{n}", a.signature.name);
            n += 1;
        }
        wrappers.push(name);
    }

    // (start, end, replacement)
    let mut edits: Vec<(usize, usize, String)> = Vec::new();
    let mut first_use: Option<usize> = None;
    for item in &items {
        let (Some((bo, bc)), Some(name)) = (item.body, item.name.as_deref()) else {
            continue;
        };
        // Execution advice replaces the whole body.
        let exec = execution_match(toks, item, name, advice);
        if let Some(ai) = exec {
            let a = &advice[ai];
            let def_params = item.params_open.map(|o| parse_params(toks, o)).unwrap_or_default();
            let map: HashMap<String, String> = a
                .signature
                .params
                .iter()
                .zip(&def_params)
                .filter_map(|(ap, dp)| Some((ap.name.clone()?, dp.name.clone()?)))
                .filter(|(x, y)| x != y)
                .collect();
            let (s, e) = (toks[bo].start, toks[bc].end);
            edits.push((s, e, rename_idents(&a.body, &map)));
            report.counts[ai] += 1;
            continue;
        }
        let mut k = bo + 1;
        while k < bc {
            let t = &toks[k];
            if t.is_ident() && !is_member(toks, k) && toks.get(k + 1).is_some_and(|n| n.is_punct("(")) {
                if let Some(close) = matching_close(toks, k + 1) {
                    let arity = call_arity(toks, k + 1, close);
                    let hit = advice.iter().position(|a| {
                        a.kind == AdviceKind::Call && a.signature.name == t.text && a.arity() == arity
                    });
                    if let Some(ai) = hit {
                        edits.push((t.start, t.end, wrappers[ai].clone()));
                        report.counts[ai] += 1;
                        first_use.get_or_insert(item.start);
                    }
                }
            }
            k += 1;
        }
    }
    if edits.is_empty() {
        return Ok((source.to_string(), report));
    }

    let called: Vec<usize> = (0..advice.len())
        .filter(|&i| advice[i].kind == AdviceKind::Call && report.counts[i] > 0)
        .collect();
    let wrapper_head = |i: usize| {
        let a = &advice[i];
        let params: Vec<String> = a
            .signature
            .params
            .iter()
            .zip(a.signature.param_names("arg"))
            .map(|(p, n)| param_decl(p, &n))
            .collect();
        let params = if params.is_empty() { "void".to_string() } else { params.join(", ") };
        let ret = &a.signature.return_type;
        let sep = if ret.ends_with('*') { "" } else { " " };
        format!("static {ret}{sep}{}({params})", wrappers[i])
    };
    if let Some(pos) = first_use {
        // Prototypes share the line of the first user to keep line numbers.
        let protos: String = called.iter().map(|&i| format!("{}; ", wrapper_head(i))).collect();
        edits.push((pos, pos, protos));
    }
    edits.sort_by_key(|e| (e.0, e.1));
    report.ranges = edits.iter().filter(|e| e.0 != e.1).map(|e| (e.0, e.1)).collect();

    let mut out = String::with_capacity(source.len());
    let mut at = 0;
    for (s, e, text) in &edits {
        out.push_str(&source[at..*s]);
        out.push_str(text);
        at = *e;
    }
    out.push_str(&source[at..]);
    for &i in &called {
        if !out.ends_with('\n') {
            out.push('\n');
        }
        let _ = write!(out, "\n/* around: {} */\n{}\n{}\n", advice[i].describe(), wrapper_head(i), advice[i].body);
    }
    Ok((out, report))
}

/// Execution advice applying to a definition. Name and arity must match;
/// among several candidates the one whose return type equals the
/// definition's wins.
fn execution_match(toks: &[Token], item: &Item, name: &str, advice: &[Advice]) -> Option<usize> {
    let arity = item.params_open.map(|o| parse_params(toks, o).len()).unwrap_or(0);
    let cands: Vec<usize> = (0..advice.len())
        .filter(|&i| {
            let a = &advice[i];
            a.kind == AdviceKind::Execution && a.signature.name == name && a.arity() == arity
        })
        .collect();
    if cands.len() <= 1 {
        return cands.first().copied();
    }
    let def_ret = normalized_type(&return_type(toks, item));
    cands
        .iter()
        .copied()
        .find(|&i| normalized_type(&advice[i].signature.return_type) == def_ret)
}

pub const MERGE_BANNER: &str = "/* Merged translation unit. */\n";

/// Merge named sources into one translation unit.
///
/// File-scope static symbols of source `N` are renamed `name__fN`, type
/// definitions byte-equal to an earlier one are dropped and, when
/// `entry_point` is defined, functions not reachable from it or from advice
/// wrappers are removed. Removed text is replaced by blank lines so every
/// line marker stays accurate.
pub fn merge(sources: &[(String, String)], entry_point: Option<&str>) -> Result<String, MergeError> {
    let parse_err = |file: &str, message: String| MergeError::Parse {
        file: file.to_string(),
        message,
    };
    let mut renamed: Vec<String> = Vec::new();
    for (idx, (file, text)) in sources.iter().enumerate() {
        let lexed = clex::lex(text).map_err(|e| parse_err(file, e.to_string()))?;
        let items = scan_items(&lexed).map_err(|e| parse_err(file, e.to_string()))?;
        let statics: HashMap<String, String> = items
            .iter()
            .filter(|i| i.is_static && matches!(i.kind, ItemKind::Function | ItemKind::Prototype | ItemKind::Variable))
            .flat_map(|i| i.names.iter().cloned().chain(i.name.clone()))
            .map(|n| {
                let new = format!("{n}__f{idx}");
                (n, new)
            })
            .collect();
        renamed.push(if statics.is_empty() { text.clone() } else { rename_idents(text, &statics) });
    }

    struct Unit {
        lexed: clex::Lexed,
        items: Vec<Item>,
    }
    let mut units = Vec::new();
    let mut defined: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, text) in renamed.iter().enumerate() {
        let file = &sources[idx].0;
        let lexed = clex::lex(text).map_err(|e| parse_err(file, e.to_string()))?;
        let items = scan_items(&lexed).map_err(|e| parse_err(file, e.to_string()))?;
        for it in items.iter().filter(|i| i.kind == ItemKind::Function) {
            let name = it.name.clone().unwrap_or_default();
            if defined.insert(name.clone(), idx).is_some() {
                return Err(MergeError::Duplicate(name));
            }
        }
        units.push(Unit { lexed, items });
    }

    // Byte ranges to blank out, per unit.
    let mut drop: Vec<Vec<(usize, usize)>> = vec![Vec::new(); units.len()];
    let mut seen_types: HashSet<&str> = HashSet::new();
    for (u, unit) in units.iter().enumerate() {
        for it in unit.items.iter().filter(|i| i.kind == ItemKind::Type) {
            let text = &renamed[u][it.start..it.end];
            if !seen_types.insert(text) {
                drop[u].push((it.start, item_end(&unit.lexed.tokens, it)));
            }
        }
    }

    if let Some(entry) = entry_point.filter(|e| defined.contains_key(*e)) {
        // Identifiers referenced by each function and by file-scope data.
        let mut refs: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        queue.push_back(entry);
        for unit in &units {
            let toks = &unit.lexed.tokens;
            for it in &unit.items {
                let idents = toks[it.first..=it.last].iter().filter(|t| t.is_ident()).map(|t| t.text.as_str());
                match (it.kind, it.body) {
                    (ItemKind::Function, Some((bo, bc))) => {
                        let name = it.name.as_deref().unwrap_or_default();
                        let body = toks[bo..=bc].iter().filter(|t| t.is_ident()).map(|t| t.text.as_str());
                        refs.entry(name).or_default().extend(body);
                        if name.starts_with("ldv_around_") {
                            queue.push_back(name);
                        }
                    }
                    (ItemKind::Variable, _) => queue.extend(idents),
                    _ => {}
                }
            }
        }
        let mut live: HashSet<&str> = HashSet::new();
        while let Some(n) = queue.pop_front() {
            if defined.contains_key(n) && live.insert(n) {
                if let Some(r) = refs.get(n) {
                    queue.extend(r.iter().copied());
                }
            }
        }
        for (u, unit) in units.iter().enumerate() {
            for it in unit.items.iter().filter(|i| i.kind == ItemKind::Function) {
                if !live.contains(it.name.as_deref().unwrap_or_default()) {
                    drop[u].push((it.start, item_end(&unit.lexed.tokens, it)));
                }
            }
        }
    }

    let mut out = String::from(MERGE_BANNER);
    for (u, text) in renamed.iter().enumerate() {
        let _ = writeln!(out, "# 1 \"{}\"", sources[u].0);
        let mut ranges = std::mem::take(&mut drop[u]);
        ranges.sort();
        let mut at = 0;
        for (s, e) in ranges {
            out.push_str(&text[at..s]);
            out.extend(text[s..e].chars().filter(|&c| c == '\n'));
            at = e;
        }
        out.push_str(&text[at..]);
        if !out.ends_with('\n') {
            out.push('\n');
        }
    }
    Ok(out)
}

/// End of an item including a directly following `;`.
fn item_end(toks: &[Token], it: &Item) -> usize {
    match toks.get(it.last + 1) {
        Some(t) if t.is_punct(";") && it.kind == ItemKind::Function => t.end,
        _ => it.end,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buildbase::extract_symbols;

    const FIG18: &str = "around: call(void __module_get(struct module *module) {\n\tldv_module_get(module);\n}\n\n\
        around: call(bool try_module_get(struct module *module)) {\n\treturn ldv_try_module_get(module);\n}\n\n\
        around: call(void module_put(struct module *module)) {\n\tldv_module_put(module);\n}\n";

    const FIG11: &str = "around: execution(static inline void *kmalloc(size_t size, gfp_t flags))\n{\n    return ldv_kmalloc(size, flags);\n}\n";

    #[test]
    fn parses_call_advice_with_missing_parenthesis() {
        let adv = parse_aspect(FIG18).unwrap();
        let names: Vec<_> = adv.iter().map(|a| a.signature.name.as_str()).collect();
        assert_eq!(names, ["__module_get", "try_module_get", "module_put"]);
        assert!(adv.iter().all(|a| a.kind == AdviceKind::Call && a.arity() == 1));
        assert_eq!(adv[1].signature.return_type, "bool");
        assert_eq!(adv[2].body, "{\n\tldv_module_put(module);\n}");
    }

    #[test]
    fn aspect_errors() {
        assert_eq!(parse_aspect("").unwrap(), vec![]);
        assert_eq!(parse_aspect("/* nothing */\n// here\n").unwrap(), vec![]);
        assert!(matches!(parse_aspect("before: call(void f(void)) { }"), Err(WeaveError::Syntax { .. })));
        assert!(matches!(parse_aspect("around: get(void f(void)) { }"), Err(WeaveError::Syntax { .. })));
        assert!(parse_aspect("around: call(void f(void)) { ").is_err());
    }

    #[test]
    fn execution_replaces_definition_body() {
        let adv = parse_aspect(FIG11).unwrap();
        let src = "static inline void *kmalloc(size_t sz, gfp_t gfp)\n{\n    return __kmalloc(sz, gfp);\n}\nint x;\n";
        let (out, rep) = weave(src, &adv).unwrap();
        assert_eq!(rep.counts, vec![1]);
        assert_eq!(
            out,
            "static inline void *kmalloc(size_t sz, gfp_t gfp)\n{\n    return ldv_kmalloc(sz, gfp);\n}\nint x;\n"
        );
    }

    #[test]
    fn execution_absent_definition_is_a_noop() {
        let adv = parse_aspect(FIG11).unwrap();
        let src = "void *kmalloc(size_t size, gfp_t flags);\nint f(void) { return 0; }\n";
        let (out, rep) = weave(src, &adv).unwrap();
        assert_eq!(rep.counts, vec![0]);
        assert_eq!(out, src);
    }

    #[test]
    fn return_type_selects_between_same_arity_variants() {
        let aspect = "around: execution(static inline long IS_ERR(const void *ptr))\n{\n\treturn ldv_is_err(ptr);\n}\n\n\
            /* Starting from Linux 3.15 IS_ERR() returns Boolean values. */\n\
            around: execution(static inline bool IS_ERR(const void *ptr))\n{\n\tlong ret;\n\tret = ldv_is_err(ptr);\n\treturn (bool)ret;\n}\n";
        let adv = parse_aspect(aspect).unwrap();
        assert_eq!(adv.len(), 2);
        let src = "static inline bool IS_ERR(const void *p) { return p == 0; }\n";
        let (out, rep) = weave(src, &adv).unwrap();
        assert_eq!(rep.counts, vec![0, 1]);
        assert!(out.contains("ret = ldv_is_err(p);"), "{out}");
        let src = "static inline long IS_ERR(const void *p) { return p == 0; }\n";
        let (_, rep) = weave(src, &adv).unwrap();
        assert_eq!(rep.counts, vec![1, 0]);
    }

    #[test]
    fn call_sites_dispatch_to_wrappers() {
        let adv = parse_aspect(FIG18).unwrap();
        let src = "struct module;\nvoid module_put(struct module *m);\n\
                   int exit(struct module *mod)\n{\n    if (try_module_get(mod))\n        module_put(mod);\n    module_put(mod);\n    return 0;\n}\n";
        let (out, rep) = weave(src, &adv).unwrap();
        assert_eq!(rep.counts, vec![0, 1, 2]);
        assert!(out.contains("    ldv_around_module_put(mod);\n    return 0;"), "{out}");
        assert!(out.contains("if (ldv_around_try_module_get(mod))"));
        assert!(out.contains("static void ldv_around_module_put(struct module *module)\n{\n\tldv_module_put(module);\n}"));
        // The prototype shares a line, so line numbers of the source hold.
        assert_eq!(out.lines().nth(2).unwrap(), "static bool ldv_around_try_module_get(struct module *module); static void ldv_around_module_put(struct module *module); int exit(struct module *mod)");
        assert!(!out.contains("__module_get"));
        // Unrelated prototype and member calls stay.
        assert!(out.contains("void module_put(struct module *m);"));
        let (o2, r2) = weave("void f(struct s *p) { p->module_put(p); module_put(p, 1); }", &adv).unwrap();
        assert_eq!(r2.total(), 0);
        assert_eq!(o2, "void f(struct s *p) { p->module_put(p); module_put(p, 1); }");
    }

    #[test]
    fn empty_advice_is_identity() {
        let src = "int main(void) { return 0; } /* x */";
        assert_eq!(weave(src, &[]).unwrap().0, src);
    }

    #[test]
    fn merge_single_source_adds_only_markers() {
        let src = "int entry_point(void) { return 0; }\n";
        let out = merge(&[("a.c".into(), src.into())], Some("entry_point")).unwrap();
        assert_eq!(out, format!("{MERGE_BANNER}# 1 \"a.c\"\n{src}"));
    }

    #[test]
    fn merge_renames_statics_per_file() {
        let a = "static int helper(void) { return 1; }\nint a(void) { return helper(); }\n";
        let b = "static int helper(void) { return 2; }\nint entry_point(void) { return a() + helper(); }\n";
        let out = merge(&[("a.c".into(), a.into()), ("b.c".into(), b.into())], Some("entry_point")).unwrap();
        assert!(out.contains("return helper__f0();"));
        assert!(out.contains("a() + helper__f1()"));
        let syms = extract_symbols(&out).unwrap();
        let mut names: Vec<_> = syms.definitions.iter().map(|d| d.name.clone()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        assert_eq!(n, 4);
    }

    #[test]
    fn merge_rejects_duplicate_global_functions() {
        let a = "int f(void) { return 1; }\n";
        assert_eq!(
            merge(&[("a.c".into(), a.into()), ("b.c".into(), a.into())], None),
            Err(MergeError::Duplicate("f".into()))
        );
    }

    #[test]
    fn merge_prunes_unreachable_and_duplicate_types() {
        let a = "struct s { int x; };\nint used(void) { return 1; }\nint unused(void)\n{\n    return 2;\n}\n";
        let b = "struct s { int x; };\nstatic int ldv_around_f(void) { return 3; }\nint entry_point(void) { return used(); }\n";
        let out = merge(&[("a.c".into(), a.into()), ("b.c".into(), b.into())], Some("entry_point")).unwrap();
        assert_eq!(out.matches("struct s { int x; };").count(), 1);
        assert!(!out.contains("unused"));
        assert!(out.contains("ldv_around_f__f1"));
        assert!(out.contains("int used(void)"));
        // Six source lines of a.c remain six lines.
        let a_part = out.split("# 1 \"b.c\"").next().unwrap();
        assert_eq!(a_part.lines().count(), 2 + 6);
    }

    #[test]
    fn function_pointer_initializers_keep_targets_alive() {
        let a = "static int probe(void) { return 0; }\nstruct ops { int (*p)(void); } o = { .p = probe };\nvoid entry_point(void) { }\n";
        let out = merge(&[("a.c".into(), a.into())], Some("entry_point")).unwrap();
        assert!(out.contains("static int probe__f0(void)"));
        assert!(out.contains(".p = probe__f0"));
    }
}
