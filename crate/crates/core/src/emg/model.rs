//! Intermediate model documents, validation, signal pairing and the symbolic
//! trace enumeration used as the translator's reference semantics.

use super::process::{parse_process, ProcessExpr};
use super::EmgError;
use crate::buildbase::starts_declaration;
use crate::clex;
use regex::Regex;
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    /// C declaration including the label name, e.g. `struct ops *ops`.
    pub declaration: String,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Block {
        condition: Option<String>,
        statements: Vec<String>,
        comment: String,
    },
    Receive {
        params: Vec<String>,
        condition: Option<String>,
        postcondition: Option<String>,
        replicative: bool,
        comment: String,
    },
    Send {
        params: Vec<String>,
        condition: Option<String>,
        comment: String,
    },
    Jump {
        body: ProcessExpr,
        comment: String,
    },
}

impl Action {
    pub fn comment(&self) -> &str {
        match self {
            Action::Block { comment, .. }
            | Action::Receive { comment, .. }
            | Action::Send { comment, .. }
            | Action::Jump { comment, .. } => comment,
        }
    }

    pub fn params(&self) -> &[String] {
        match self {
            Action::Receive { params, .. } | Action::Send { params, .. } => params,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioModel {
    pub name: String,
    pub category: String,
    /// Prototype of the modeled function; present for function models only.
    pub declaration: Option<String>,
    /// Labels in document order.
    pub labels: Vec<(String, Label)>,
    pub actions: BTreeMap<String, Action>,
    pub process: ProcessExpr,
}

impl ScenarioModel {
    pub fn label(&self, name: &str) -> Option<&Label> {
        self.labels.iter().find(|(n, _)| n == name).map(|(_, l)| l)
    }

    /// Declared type of a label: its declaration with the name removed.
    pub fn label_type(&self, name: &str) -> Option<String> {
        self.label(name).map(|l| declaration_type(&l.declaration, name))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EntryOrder {
    #[default]
    Sequence,
    Random,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntermediateModel {
    pub supplementary_sources: Vec<String>,
    pub function_models: Vec<ScenarioModel>,
    pub thread_models: Vec<ScenarioModel>,
    pub entry_order: EntryOrder,
    pub warnings: Vec<String>,
}

impl IntermediateModel {
    /// Function models first, then thread models, each in document order.
    pub fn scenarios(&self) -> impl Iterator<Item = &ScenarioModel> {
        self.function_models.iter().chain(&self.thread_models)
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioModel> {
        self.scenarios().find(|s| s.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.function_models.is_empty() && self.thread_models.is_empty()
    }

    /// Add scenarios from `other`, replacing same-named ones in place.
    pub fn merge(&mut self, other: IntermediateModel) {
        fn upsert(into: &mut Vec<ScenarioModel>, s: ScenarioModel) {
            match into.iter_mut().find(|x| x.name == s.name) {
                Some(slot) => *slot = s,
                None => into.push(s),
            }
        }
        for s in other.function_models {
            self.thread_models.retain(|x| x.name != s.name);
            upsert(&mut self.function_models, s);
        }
        for s in other.thread_models {
            self.function_models.retain(|x| x.name != s.name);
            upsert(&mut self.thread_models, s);
        }
        self.supplementary_sources.extend(other.supplementary_sources);
        if other.entry_order == EntryOrder::Random {
            self.entry_order = EntryOrder::Random;
        }
        self.warnings.extend(other.warnings);
    }
}

/// Remove the declarator name from a C declaration and normalize spacing.
pub fn declaration_type(declaration: &str, name: &str) -> String {
    let Ok(lexed) = clex::lex(declaration) else {
        return clex::normalize_ws(declaration);
    };
    let mut toks = lexed.tokens;
    if let Some(pos) = toks.iter().rposition(|t| t.is_ident() && t.text == name) {
        toks.remove(pos);
    }
    clex::join_tokens(&toks)
}

fn label_ref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"%([A-Za-z_][A-Za-z0-9_]*)%").unwrap())
}

/// Names referenced as `%name%` in C text.
pub fn label_refs(text: &str) -> Vec<String> {
    label_ref_re().captures_iter(text).map(|c| c[1].to_string()).collect()
}

/// Replace every `%name%` using `map`; unknown names are left in place.
pub fn substitute_labels(text: &str, map: &dyn Fn(&str) -> Option<String>) -> String {
    label_ref_re()
        .replace_all(text, |c: &regex::Captures| map(&c[1]).unwrap_or_else(|| c[0].to_string()))
        .into_owned()
}

const RESERVED_KEYS: &[&str] = &[
    "functions models",
    "environment processes",
    "supplementary sources",
    "entry order",
];

/// Parse a model document from JSON text.
pub fn parse_model_str(text: &str) -> Result<IntermediateModel, EmgError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| EmgError::Semantic(format!("invalid model document: {e}")))?;
    parse_model(&doc)
}

/// Parse and validate a model document.
///
/// The document is either a map from scenario name to scenario, where
/// scenarios carrying a `declaration` are function models, or an object with
/// the keys `functions models`, `environment processes`,
/// `supplementary sources` and `entry order`.
pub fn parse_model(doc: &Value) -> Result<IntermediateModel, EmgError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| EmgError::Semantic("model document must be an object".into()))?;
    let mut model = IntermediateModel::default();
    let structured = obj.keys().any(|k| RESERVED_KEYS.contains(&k.as_str()));
    if structured {
        if let Some(k) = obj.keys().find(|k| !RESERVED_KEYS.contains(&k.as_str())) {
            return Err(EmgError::Semantic(format!("unknown model document key {k:?}")));
        }
        for (name, s) in section(obj, "functions models")? {
            let sm = parse_scenario(name, s, &mut model.warnings)?;
            if sm.declaration.is_none() {
                return Err(EmgError::Semantic(format!("function model {name:?} has no declaration")));
            }
            model.function_models.push(sm);
        }
        for (name, s) in section(obj, "environment processes")? {
            model.thread_models.push(parse_scenario(name, s, &mut model.warnings)?);
        }
        if let Some(src) = obj.get("supplementary sources") {
            model.supplementary_sources = string_list(src, "supplementary sources")?;
        }
        model.entry_order = match obj.get("entry order").and_then(Value::as_str) {
            None | Some("sequence") => EntryOrder::Sequence,
            Some("random") => EntryOrder::Random,
            Some(o) => return Err(EmgError::Semantic(format!("unknown entry order {o:?}"))),
        };
    } else {
        for (name, s) in obj {
            let sm = parse_scenario(name, s, &mut model.warnings)?;
            if sm.declaration.is_some() {
                model.function_models.push(sm);
            } else {
                model.thread_models.push(sm);
            }
        }
    }
    if model.is_empty() {
        return Err(EmgError::Semantic("model has no scenario models".into()));
    }
    Ok(model)
}

fn section<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<Vec<(&'a String, &'a Value)>, EmgError> {
    match obj.get(key) {
        None => Ok(Vec::new()),
        Some(Value::Object(m)) => Ok(m.iter().collect()),
        Some(_) => Err(EmgError::Semantic(format!("{key:?} must be an object"))),
    }
}

fn string_list(v: &Value, what: &str) -> Result<Vec<String>, EmgError> {
    match v {
        Value::String(s) => Ok(vec![s.clone()]),
        Value::Array(xs) => xs
            .iter()
            .map(|x| {
                x.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| EmgError::Semantic(format!("{what} must hold strings")))
            })
            .collect(),
        Value::Null => Ok(Vec::new()),
        _ => Err(EmgError::Semantic(format!("{what} must be a string or a list of strings"))),
    }
}

/// A list of conditions is a conjunction.
fn condition(v: Option<&Value>, what: &str) -> Result<Option<String>, EmgError> {
    let parts = match v {
        None => return Ok(None),
        Some(v) => string_list(v, what)?,
    };
    let parts: Vec<String> = parts.into_iter().filter(|p| !p.trim().is_empty()).collect();
    Ok(match parts.len() {
        0 => None,
        1 => Some(parts[0].clone()),
        _ => Some(parts.iter().map(|p| format!("({p})")).collect::<Vec<_>>().join(" && ")),
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Block,
    Receive,
    Send,
    Jump,
}

fn leaf_kind(e: &ProcessExpr) -> Kind {
    match e {
        ProcessExpr::Block(_) => Kind::Block,
        ProcessExpr::Receive { .. } => Kind::Receive,
        ProcessExpr::Send(_) => Kind::Send,
        _ => Kind::Jump,
    }
}

fn parse_scenario(name: &str, doc: &Value, warnings: &mut Vec<String>) -> Result<ScenarioModel, EmgError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| EmgError::Semantic(format!("scenario {name:?} must be an object")))?;
    let syntax = |context: String| move |error| EmgError::Syntax { context, error };

    let mut labels = Vec::new();
    if let Some(ls) = obj.get("labels") {
        let ls = ls
            .as_object()
            .ok_or_else(|| EmgError::Semantic(format!("{name}: labels must be an object")))?;
        for (lname, l) in ls {
            let (declaration, value) = match l {
                Value::String(d) => (d.clone(), None),
                Value::Object(o) => (
                    o.get("declaration")
                        .and_then(Value::as_str)
                        .ok_or_else(|| EmgError::Semantic(format!("{name}: label {lname:?} has no declaration")))?
                        .to_string(),
                    o.get("value").and_then(Value::as_str).map(str::to_string),
                ),
                _ => return Err(EmgError::Semantic(format!("{name}: malformed label {lname:?}"))),
            };
            labels.push((lname.clone(), Label { declaration, value }));
        }
    }

    let process_text = obj
        .get("process")
        .and_then(Value::as_str)
        .ok_or_else(|| EmgError::Semantic(format!("{name}: missing process")))?;
    let process = parse_process(process_text).map_err(syntax(format!("{name} process")))?;

    let raw_actions: &Map<String, Value> = match obj.get("actions") {
        Some(Value::Object(m)) => m,
        None => &Map::new(),
        Some(_) => return Err(EmgError::Semantic(format!("{name}: actions must be an object"))),
    };

    // Determine each action's kind from the notation used to reference it,
    // following jump bodies.
    let mut kinds: BTreeMap<String, (Kind, bool)> = BTreeMap::new();
    let mut jump_bodies: BTreeMap<String, ProcessExpr> = BTreeMap::new();
    let mut pending = vec![(process.clone(), format!("{name} process"))];
    while let Some((expr, context)) = pending.pop() {
        for leaf in expr.leaves() {
            let aname = leaf.leaf_name().unwrap().to_string();
            let Some(raw) = raw_actions.get(&aname) else {
                return Err(EmgError::Semantic(format!("{name}: undeclared action \"{aname}\"")));
            };
            let kind = leaf_kind(leaf);
            let replicative = matches!(leaf, ProcessExpr::Receive { replicative: true, .. });
            match kinds.get(&aname) {
                Some((k, _)) if *k != kind => {
                    return Err(EmgError::Semantic(format!(
                        "{name}: action \"{aname}\" is referenced with different notations"
                    )))
                }
                Some(_) => {
                    if replicative {
                        kinds.get_mut(&aname).unwrap().1 = true;
                    }
                    continue;
                }
                None => {
                    kinds.insert(aname.clone(), (kind, replicative));
                }
            }
            if kind == Kind::Jump {
                let body_text = raw.get("process").and_then(Value::as_str).ok_or_else(|| {
                    EmgError::Semantic(format!("{name}: jump \"{aname}\" has no process"))
                })?;
                let body = parse_process(body_text).map_err(syntax(format!("{name} jump {aname}")))?;
                jump_bodies.insert(aname.clone(), body.clone());
                pending.push((body, context.clone()));
            } else if raw.get("process").is_some() {
                return Err(EmgError::Semantic(format!(
                    "{name}: action \"{aname}\" has a process but is not referenced as a jump"
                )));
            }
        }
    }

    let mut actions = BTreeMap::new();
    for (aname, raw) in raw_actions {
        let Some(&(kind, replicative)) = kinds.get(aname) else {
            warnings.push(format!("{name}: action \"{aname}\" is never used"));
            continue;
        };
        let comment = raw.get("comment").and_then(Value::as_str).unwrap_or("").to_string();
        let what = |k: &str| format!("{name}: {aname} {k}");
        let params: Vec<String> = match raw.get("parameters") {
            Some(p) => string_list(p, &what("parameters"))?
                .into_iter()
                .map(|p| p.trim().trim_matches('%').to_string())
                .collect(),
            None => Vec::new(),
        };
        let cond = condition(raw.get("condition"), &what("condition"))?;
        let post = condition(raw.get("postcondition"), &what("postcondition"))?;
        let statements = match raw.get("statements") {
            Some(s) => string_list(s, &what("statements"))?,
            None => Vec::new(),
        };
        if kind != Kind::Block && !statements.is_empty() {
            return Err(EmgError::Semantic(format!("{name}: only blocks can have statements, \"{aname}\" is not a block")));
        }
        let action = match kind {
            Kind::Block => {
                if !params.is_empty() {
                    return Err(EmgError::Semantic(format!("{name}: block \"{aname}\" cannot have parameters")));
                }
                for s in &statements {
                    check_block_statement(s).map_err(|m| EmgError::Semantic(format!("{name}: block \"{aname}\": {m}")))?;
                }
                Action::Block {
                    condition: cond,
                    statements,
                    comment,
                }
            }
            Kind::Receive => Action::Receive {
                params,
                condition: cond,
                postcondition: post,
                replicative,
                comment,
            },
            Kind::Send => {
                if post.is_some() {
                    return Err(EmgError::Semantic(format!("{name}: send \"{aname}\" cannot have a postcondition")));
                }
                Action::Send {
                    params,
                    condition: cond,
                    comment,
                }
            }
            Kind::Jump => Action::Jump {
                body: jump_bodies.remove(aname).unwrap(),
                comment,
            },
        };
        actions.insert(aname.clone(), action);
    }

    if let Some(first) = misplaced_replicative(&process) {
        return Err(EmgError::Semantic(format!(
            "{name}: replicative receive \"{first}\" must be the first action"
        )));
    }
    for body in actions.values().filter_map(|a| match a {
        Action::Jump { body, .. } => Some(body),
        _ => None,
    }) {
        if let Some(r) = body.leaves().into_iter().find_map(|l| match l {
            ProcessExpr::Receive { name, replicative: true } => Some(name.clone()),
            _ => None,
        }) {
            return Err(EmgError::Semantic(format!(
                "{name}: replicative receive \"{r}\" must be the first action"
            )));
        }
    }

    let declaration = obj.get("declaration").and_then(Value::as_str).map(str::to_string);
    let model = ScenarioModel {
        name: name.to_string(),
        category: obj.get("category").and_then(Value::as_str).unwrap_or("").to_string(),
        declaration,
        labels,
        actions,
        process,
    };
    check_labels(&model, warnings)?;
    Ok(model)
}

/// A replicative receive anywhere but in head position.
fn misplaced_replicative(process: &ProcessExpr) -> Option<String> {
    fn walk(e: &ProcessExpr, head: bool) -> Option<String> {
        match e {
            ProcessExpr::Receive { name, replicative: true } if !head => Some(name.clone()),
            ProcessExpr::Seq(xs) => xs.iter().enumerate().find_map(|(i, x)| walk(x, head && i == 0)),
            ProcessExpr::Choice(xs) => xs.iter().find_map(|x| walk(x, head)),
            _ => None,
        }
    }
    walk(process, true)
}

fn check_block_statement(stmt: &str) -> Result<(), String> {
    let lexed = clex::lex(stmt).map_err(|e| e.to_string())?;
    let toks = &lexed.tokens;
    if toks.iter().any(|t| t.is_ident() && t.text == "goto") {
        return Err("goto is not allowed".into());
    }
    let typedefs = HashSet::new();
    let mut stmt_start = true;
    for (i, t) in toks.iter().enumerate() {
        if stmt_start {
            if t.is_ident()
                && !matches!(t.text.as_str(), "default" | "case")
                && toks.get(i + 1).is_some_and(|n| n.is_punct(":"))
            {
                return Err(format!("label definition {:?} is not allowed", t.text));
            }
            if starts_declaration(toks, i, &typedefs) && !matches!(t.text.as_str(), "const" | "volatile") {
                return Err("variable declarations are not allowed".into());
            }
        }
        stmt_start = t.is_punct(";") || t.is_punct("{") || t.is_punct("}");
    }
    Ok(())
}

fn check_labels(m: &ScenarioModel, warnings: &mut Vec<String>) -> Result<(), EmgError> {
    let mut used = BTreeSet::new();
    let mut texts: Vec<&str> = Vec::new();
    for a in m.actions.values() {
        match a {
            Action::Block { condition, statements, .. } => {
                texts.extend(condition.as_deref());
                texts.extend(statements.iter().map(String::as_str));
            }
            Action::Receive {
                params,
                condition,
                postcondition,
                ..
            } => {
                texts.extend(condition.as_deref());
                texts.extend(postcondition.as_deref());
                used.extend(params.iter().cloned());
            }
            Action::Send { params, condition, .. } => {
                texts.extend(condition.as_deref());
                used.extend(params.iter().cloned());
            }
            Action::Jump { .. } => {}
        }
    }
    for (_, l) in &m.labels {
        texts.extend(l.value.as_deref());
    }
    for t in texts {
        used.extend(label_refs(t));
    }
    for u in &used {
        if m.label(u).is_none() {
            return Err(EmgError::Semantic(format!("{}: undeclared label \"{u}\"", m.name)));
        }
    }
    for (l, _) in &m.labels {
        if !used.contains(l) && !declares_parameter(m, l) {
            warnings.push(format!("{}: label \"{l}\" is never used", m.name));
        }
    }
    Ok(())
}

/// Labels of a function model named after its parameters bind those parameters.
fn declares_parameter(m: &ScenarioModel, label: &str) -> bool {
    m.declaration.as_deref().is_some_and(|d| {
        clex::lex(d).is_ok_and(|l| l.tokens.iter().any(|t| t.is_ident() && t.text == label))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SignalPair {
    pub sender: String,
    pub send: String,
    pub receiver: String,
    pub receive: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignalPairing {
    /// Sorted by sender, send action, receiver, receive action.
    pub pairs: Vec<SignalPair>,
    pub warnings: Vec<String>,
}

impl SignalPairing {
    /// Receivers of a send, in the document order of `model`.
    pub fn receivers_of<'a>(&'a self, model: &'a IntermediateModel, sender: &str, send: &str) -> Vec<&'a SignalPair> {
        let mut out: Vec<&SignalPair> =
            self.pairs.iter().filter(|p| p.sender == sender && p.send == send).collect();
        let order: Vec<&str> = model.scenarios().map(|s| s.name.as_str()).collect();
        out.sort_by_key(|p| (order.iter().position(|n| *n == p.receiver), p.receive.clone()));
        out
    }

    pub fn is_received(&self, receiver: &str, receive: &str) -> bool {
        self.pairs.iter().any(|p| p.receiver == receiver && p.receive == receive)
    }
}

/// Pair every send with every equally named receive of another scenario.
pub fn pair_signals(model: &IntermediateModel) -> Result<SignalPairing, EmgError> {
    let mut out = SignalPairing::default();
    let all: Vec<&ScenarioModel> = model.scenarios().collect();
    let types = |s: &ScenarioModel, params: &[String]| -> Vec<String> {
        params.iter().map(|p| s.label_type(p).unwrap_or_default()).collect()
    };
    let mut received = BTreeSet::new();
    for s in &all {
        for (aname, a) in &s.actions {
            let Action::Send { params, .. } = a else { continue };
            let mut matched = false;
            for r in &all {
                if r.name == s.name {
                    continue;
                }
                let Some(Action::Receive { params: rparams, .. }) = r.actions.get(aname) else {
                    continue;
                };
                if types(s, params) != types(r, rparams) {
                    return Err(EmgError::Type(format!("{}/{aname}", s.name), format!("{}/{aname}", r.name)));
                }
                matched = true;
                received.insert((r.name.clone(), aname.clone()));
                out.pairs.push(SignalPair {
                    sender: s.name.clone(),
                    send: aname.clone(),
                    receiver: r.name.clone(),
                    receive: aname.clone(),
                });
            }
            if !matched {
                out.warnings.push(format!("{}: send \"{aname}\" has no receiver", s.name));
            }
        }
    }
    for r in &all {
        for (aname, a) in &r.actions {
            if matches!(a, Action::Receive { .. }) && !received.contains(&(r.name.clone(), aname.clone())) {
                out.warnings.push(format!("{}: receive \"{aname}\" has no sender", r.name));
            }
        }
    }
    out.pairs.sort();
    out.warnings.sort();
    Ok(out)
}

/// All complete action sequences of at most `max_len` actions.
///
/// Choice branches, sequences run in order and a jump replaces the rest of
/// the process with its body. Conditions are ignored.
pub fn enumerate_scenario_traces(model: &ScenarioModel, max_len: usize) -> BTreeSet<Vec<String>> {
    let jumps = model
        .actions
        .values()
        .filter(|a| matches!(a, Action::Jump { .. }))
        .count();
    let mut out = BTreeSet::new();
    let mut trace = Vec::new();
    expand(model, vec![&model.process], &mut trace, 0, jumps, max_len, &mut out);
    out
}

fn expand<'a>(
    model: &'a ScenarioModel,
    mut stack: Vec<&'a ProcessExpr>,
    trace: &mut Vec<String>,
    idle_jumps: usize,
    jump_count: usize,
    max_len: usize,
    out: &mut BTreeSet<Vec<String>>,
) {
    let Some(top) = stack.pop() else {
        out.insert(trace.clone());
        return;
    };
    match top {
        ProcessExpr::Block(n) | ProcessExpr::Send(n) | ProcessExpr::Receive { name: n, .. } => {
            if trace.len() == max_len {
                return;
            }
            trace.push(n.clone());
            expand(model, stack, trace, 0, jump_count, max_len, out);
            trace.pop();
        }
        ProcessExpr::Seq(xs) => {
            stack.extend(xs.iter().rev());
            expand(model, stack, trace, idle_jumps, jump_count, max_len, out);
        }
        ProcessExpr::Choice(xs) => {
            for x in xs {
                let mut s = stack.clone();
                s.push(x);
                expand(model, s, trace, idle_jumps, jump_count, max_len, out);
            }
        }
        ProcessExpr::Jump(n) => {
            // A cycle of jumps with no action in between never terminates.
            if idle_jumps > jump_count {
                return;
            }
            if let Some(Action::Jump { body, .. }) = model.actions.get(n) {
                expand(model, vec![body], trace, idle_jumps + 1, jump_count, max_len, out);
            }
        }
    }
}

/// Traces of every scenario model, keyed by scenario name.
pub fn enumerate_traces(model: &IntermediateModel, max_len: usize) -> BTreeMap<String, BTreeSet<Vec<String>>> {
    model
        .scenarios()
        .map(|s| (s.name.clone(), enumerate_scenario_traces(s, max_len)))
        .collect()
}
