//! Sequential translation of intermediate models into C.
//!
//! Every scenario model becomes a control function. Choices lower to
//! nondeterministic `if` chains, jumps to `goto` into labeled blocks that end
//! the function, and a send calls the control functions of its receivers.
//! Receives are therefore only allowed as the first action and sends only as
//! the last one.

use super::model::{pair_signals, substitute_labels, Action, EntryOrder, IntermediateModel, ScenarioModel, SignalPairing};
use super::process::ProcessExpr;
use super::EmgError;
use crate::clex;
use crate::cscan::{parse_prototype, Prototype};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslateOptions {
    pub entry_point: String,
    /// Emit an empty `ldv_emg_action_<scenario>__<action>()` call for every
    /// executed block, send and receive so that action sequences show up as
    /// call events in verifier traces.
    pub action_hooks: bool,
    /// Functions called at the end of the entry point, e.g. final state checks.
    pub finalizers: Vec<String>,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        TranslateOptions {
            entry_point: "entry_point".into(),
            action_hooks: false,
            finalizers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarnessBundle {
    /// The main environment model source.
    pub environment_c: String,
    /// `(file name, aspect text)` per function model.
    pub aspects: Vec<(String, String)>,
    pub entry_point: String,
    pub warnings: Vec<String>,
}

/// Mangle a scenario or action name into a C identifier fragment.
pub fn ident(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

pub fn control_function(scenario: &str) -> String {
    format!("ldv_emg_{}", ident(scenario))
}

pub fn action_hook(scenario: &str, action: &str) -> String {
    format!("ldv_emg_action_{}__{}", ident(scenario), ident(action))
}

/// C variable holding a label.
pub fn label_var(label: &str) -> String {
    if label.starts_with("ldv_") {
        label.to_string()
    } else {
        format!("ldv_emg_{label}")
    }
}

/// Rewrite a label declaration to declare `var` instead of `name`.
fn rename_declaration(declaration: &str, name: &str, var: &str) -> String {
    let Ok(lexed) = clex::lex(declaration) else {
        return format!("{declaration} {var}");
    };
    match lexed.tokens.iter().rev().find(|t| t.is_ident() && t.text == name) {
        Some(t) => format!("{}{var}{}", &declaration[..t.start], &declaration[t.end..]).trim().to_string(),
        None => format!("{} {var}", declaration.trim()),
    }
}

/// Head and tail position checks of the sequential translator.
fn check_restrictions(m: &ScenarioModel, is_function: bool) -> Result<Option<String>, EmgError> {
    let err = |msg: String| Err(EmgError::Translation(format!("{}: {msg}", m.name)));
    let mut heads = BTreeSet::new();
    fn walk(
        e: &ProcessExpr,
        head: bool,
        tail: bool,
        heads: &mut BTreeSet<String>,
        bad: &mut Vec<String>,
    ) {
        match e {
            ProcessExpr::Receive { name, .. } => {
                if head {
                    heads.insert(name.clone());
                } else {
                    bad.push(format!("receive \"{name}\" is not the first action"));
                }
            }
            ProcessExpr::Send(name) if !tail => bad.push(format!("send \"{name}\" is not the last action")),
            ProcessExpr::Seq(xs) => {
                let n = xs.len();
                for (i, x) in xs.iter().enumerate() {
                    walk(x, head && i == 0, tail && i + 1 == n, heads, bad);
                }
            }
            ProcessExpr::Choice(xs) => xs.iter().for_each(|x| walk(x, head, tail, heads, bad)),
            _ => {}
        }
    }
    let mut bad = Vec::new();
    walk(&m.process, true, true, &mut heads, &mut bad);
    for a in m.actions.values() {
        if let Action::Jump { body, .. } = a {
            walk(body, false, true, &mut heads, &mut bad);
        }
    }
    if let Some(b) = bad.into_iter().next() {
        return err(b);
    }
    if heads.len() > 1 {
        return err(format!("several first receives: {}", heads.into_iter().collect::<Vec<_>>().join(", ")));
    }
    if is_function && !heads.is_empty() {
        return err("function models cannot receive signals".into());
    }
    Ok(heads.into_iter().next())
}

struct Scenario<'a> {
    model: &'a ScenarioModel,
    func: String,
    prototype: Option<Prototype>,
    head_receive: Option<String>,
}

impl Scenario<'_> {
    /// Parameters of a function model bind the labels named after them.
    fn is_param(&self, label: &str) -> bool {
        self.prototype
            .as_ref()
            .is_some_and(|p| p.params.iter().any(|x| x.name.as_deref() == Some(label)))
    }

    fn head_params(&self) -> Vec<String> {
        match self.head_receive.as_ref().and_then(|r| self.model.actions.get(r)) {
            Some(Action::Receive { params, .. }) => params.clone(),
            _ => Vec::new(),
        }
    }

    fn signature(&self) -> String {
        match &self.prototype {
            Some(p) => {
                let params: Vec<String> = p
                    .params
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let name = label_var(&x.name.clone().unwrap_or_else(|| format!("arg{i}")));
                        join_type(&x.ty, &name)
                    })
                    .collect();
                format!("{} {}({})", p.return_type, self.func, params_text(&params))
            }
            None => {
                let params: Vec<String> = self
                    .head_params()
                    .iter()
                    .enumerate()
                    .map(|(k, l)| join_type(&self.model.label_type(l).unwrap_or_default(), &format!("ldv_emg_arg{k}")))
                    .collect();
                format!("void {}({})", self.func, params_text(&params))
            }
        }
    }
}

fn params_text(params: &[String]) -> String {
    if params.is_empty() {
        "void".into()
    } else {
        params.join(", ")
    }
}

fn join_type(ty: &str, name: &str) -> String {
    if ty.ends_with('*') {
        format!("{ty}{name}")
    } else {
        format!("{ty} {name}")
    }
}

struct Emitter<'a> {
    model: &'a IntermediateModel,
    pairing: &'a SignalPairing,
    scenarios: &'a BTreeMap<String, Scenario<'a>>,
    opts: &'a TranslateOptions,
    out: String,
}

impl Emitter<'_> {
    fn line(&mut self, indent: usize, text: &str) {
        let _ = writeln!(self.out, "{}{}", "    ".repeat(indent), text);
    }

    fn subst(&self, s: &Scenario, text: &str) -> Result<String, EmgError> {
        let out = substitute_labels(text, &|l| s.model.label(l).map(|_| label_var(l)));
        if let Some(l) = super::model::label_refs(&out).into_iter().next() {
            return Err(EmgError::Translation(format!("{}: unsubstituted label %{l}%", s.model.name)));
        }
        Ok(out)
    }

    fn assume(&mut self, s: &Scenario, indent: usize, cond: &Option<String>) -> Result<(), EmgError> {
        if let Some(c) = cond {
            let c = self.subst(s, c)?;
            self.line(indent, &format!("__VERIFIER_assume({c});"));
        }
        Ok(())
    }

    fn comment(&mut self, indent: usize, text: &str) {
        let text = text.trim().replace("*/", "* /");
        if !text.is_empty() {
            self.line(indent, &format!("/* {text} */"));
        }
    }

    fn hook(&mut self, s: &Scenario, indent: usize, action: &str) {
        if self.opts.action_hooks {
            let h = action_hook(&s.model.name, action);
            self.line(indent, &format!("{h}();"));
        }
    }

    fn emit(&mut self, s: &Scenario, e: &ProcessExpr, indent: usize, jumps: &mut Vec<String>) -> Result<(), EmgError> {
        match e {
            ProcessExpr::Seq(xs) => {
                for x in xs {
                    self.emit(s, x, indent, jumps)?;
                }
            }
            ProcessExpr::Choice(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    let head = if i == 0 {
                        "if (__VERIFIER_nondet_int()) {".to_string()
                    } else if i + 1 < xs.len() {
                        "} else if (__VERIFIER_nondet_int()) {".to_string()
                    } else {
                        "} else {".to_string()
                    };
                    self.line(indent, &head);
                    self.emit(s, x, indent + 1, jumps)?;
                }
                self.line(indent, "}");
            }
            ProcessExpr::Jump(name) => {
                if !jumps.contains(name) {
                    jumps.push(name.clone());
                }
                self.line(indent, &format!("goto ldv_emg_jump_{};", ident(name)));
            }
            leaf => {
                let name = leaf.leaf_name().unwrap();
                let action = &s.model.actions[name];
                self.comment(indent, action.comment());
                match action {
                    Action::Block {
                        condition, statements, ..
                    } => {
                        self.assume(s, indent, condition)?;
                        self.hook(s, indent, name);
                        for st in statements {
                            let st = self.subst(s, st)?;
                            for l in st.lines() {
                                self.line(indent, l.trim_end());
                            }
                        }
                    }
                    Action::Receive {
                        params,
                        condition,
                        postcondition,
                        ..
                    } => {
                        self.assume(s, indent, condition)?;
                        self.hook(s, indent, name);
                        for (k, p) in params.iter().enumerate() {
                            self.line(indent, &format!("{} = ldv_emg_arg{k};", label_var(p)));
                        }
                        self.assume(s, indent, postcondition)?;
                    }
                    Action::Send { params, condition, .. } => {
                        self.assume(s, indent, condition)?;
                        self.hook(s, indent, name);
                        let args: Vec<String> = params.iter().map(|p| label_var(p)).collect();
                        for pair in self.pairing.receivers_of(self.model, &s.model.name, name) {
                            let target = &self.scenarios[&pair.receiver].func;
                            self.line(indent, &format!("{target}({});", args.join(", ")));
                        }
                    }
                    Action::Jump { .. } => unreachable!("jumps are handled above"),
                }
            }
        }
        Ok(())
    }

    fn control_function(&mut self, s: &Scenario) -> Result<(), EmgError> {
        let m = s.model;
        self.comment(0, &format!("Control function of scenario {}", m.name));
        let sig = s.signature();
        self.line(0, &sig);
        self.line(0, "{");
        for (name, l) in &m.labels {
            if !s.is_param(name) {
                let decl = rename_declaration(&l.declaration, name, &label_var(name));
                self.line(1, &format!("{decl};"));
            }
        }
        let ret = match &s.prototype {
            Some(p) if !p.returns_void() => {
                if m.label("ret").is_none() {
                    self.line(1, &format!("{};", join_type(&p.return_type, "ldv_emg_ret")));
                }
                "return ldv_emg_ret;"
            }
            _ => "return;",
        };
        for (name, l) in &m.labels {
            if let (Some(v), false) = (&l.value, s.is_param(name)) {
                let v = self.subst(s, v)?;
                self.line(1, &format!("{} = {v};", label_var(name)));
            }
        }
        let mut jumps = Vec::new();
        self.emit(s, &m.process, 1, &mut jumps)?;
        self.line(1, ret);
        let mut done = 0;
        while done < jumps.len() {
            let j = jumps[done].clone();
            done += 1;
            let Some(Action::Jump { body, comment }) = m.actions.get(&j) else {
                return Err(EmgError::Translation(format!("{}: unknown jump {j}", m.name)));
            };
            self.line(0, &format!("ldv_emg_jump_{}:", ident(&j)));
            self.comment(1, comment);
            self.emit(s, body, 1, &mut jumps)?;
            self.line(1, ret);
        }
        self.line(0, "}");
        self.line(0, "");
        Ok(())
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Translate a model into an environment source and aspect bindings.
pub fn translate(model: &IntermediateModel, opts: &TranslateOptions) -> Result<HarnessBundle, EmgError> {
    if model.is_empty() {
        return Err(EmgError::Translation("model has no scenario models".into()));
    }
    let pairing = pair_signals(model)?;
    let mut warnings = model.warnings.clone();
    warnings.extend(pairing.warnings.iter().cloned());

    let mut scenarios: BTreeMap<String, Scenario> = BTreeMap::new();
    let mut funcs = BTreeSet::new();
    for (m, is_function) in model
        .function_models
        .iter()
        .map(|m| (m, true))
        .chain(model.thread_models.iter().map(|m| (m, false)))
    {
        let head_receive = check_restrictions(m, is_function)?;
        let prototype = match (&m.declaration, is_function) {
            (Some(d), true) => Some(
                parse_prototype(d).map_err(|e| EmgError::Translation(format!("{}: declaration: {e}", m.name)))?,
            ),
            _ => None,
        };
        let func = control_function(&m.name);
        if !funcs.insert(func.clone()) {
            return Err(EmgError::Translation(format!("{}: control function name {func} is taken", m.name)));
        }
        scenarios.insert(
            m.name.clone(),
            Scenario {
                model: m,
                func,
                prototype,
                head_receive,
            },
        );
    }
    for pair in &pairing.pairs {
        if scenarios[&pair.receiver].head_receive.as_deref() != Some(pair.receive.as_str()) {
            return Err(EmgError::Translation(format!(
                "{}: receive \"{}\" is not the first action",
                pair.receiver, pair.receive
            )));
        }
    }

    let mut em = Emitter {
        model,
        pairing: &pairing,
        scenarios: &scenarios,
        opts,
        out: String::new(),
    };
    em.line(0, "int __VERIFIER_nondet_int(void);");
    em.line(0, "void *__VERIFIER_nondet_pointer(void);");
    em.line(0, "void __VERIFIER_assume(int expression);");
    em.line(0, "void *external_allocated_data(void);");
    em.line(0, "");
    for src in &model.supplementary_sources {
        em.out.push_str(src.trim_end());
        em.out.push_str("\n\n");
    }
    let ordered: Vec<&Scenario> = model.scenarios().map(|m| &scenarios[&m.name]).collect();
    for s in &ordered {
        em.line(0, &format!("{};", s.signature()));
    }
    em.line(0, "");
    if opts.action_hooks {
        for s in &ordered {
            for (a, action) in &s.model.actions {
                if !matches!(action, Action::Jump { .. }) {
                    em.line(0, &format!("void {}(void) {{}}", action_hook(&s.model.name, a)));
                }
            }
        }
        em.line(0, "");
    }
    for s in &ordered {
        em.control_function(s)?;
    }

    // Thread models nobody sends to are started by the entry point.
    let started: Vec<&Scenario> = model
        .thread_models
        .iter()
        .map(|m| &scenarios[&m.name])
        .filter(|s| {
            s.head_receive
                .as_ref()
                .is_none_or(|r| !pairing.is_received(&s.model.name, r))
        })
        .collect();
    em.line(0, &format!("void {}(void)", opts.entry_point));
    em.line(0, "{");
    let mut calls = Vec::new();
    for (i, s) in started.iter().enumerate() {
        let mut args = Vec::new();
        for (k, l) in s.head_params().iter().enumerate() {
            let var = format!("ldv_emg_start{i}_{k}");
            em.line(1, &format!("{};", join_type(&s.model.label_type(l).unwrap_or_default(), &var)));
            args.push(var);
        }
        calls.push(format!("{}({});", s.func, args.join(", ")));
    }
    let random = model.entry_order == EntryOrder::Random && calls.len() > 1;
    if random && calls.len() > 5 {
        warnings.push(format!(
            "{} thread models are too many for a random start order; starting them in sequence",
            calls.len()
        ));
    }
    if random && calls.len() <= 5 {
        let perms = permutations(calls.len());
        for (i, p) in perms.iter().enumerate() {
            let head = if i == 0 {
                "if (__VERIFIER_nondet_int()) {"
            } else if i + 1 < perms.len() {
                "} else if (__VERIFIER_nondet_int()) {"
            } else {
                "} else {"
            };
            em.line(1, head);
            for &k in p {
                em.line(2, &calls[k]);
            }
        }
        em.line(1, "}");
    } else {
        for c in &calls {
            em.line(1, c);
        }
    }
    for f in &opts.finalizers {
        em.line(1, &format!("{f}();"));
    }
    em.line(0, "}");

    let mut aspects = Vec::new();
    for m in &model.function_models {
        let s = &scenarios[&m.name];
        let p = s.prototype.as_ref().unwrap();
        let names = p.param_names("ldv_emg_p");
        let decl = if p.params.iter().all(|x| x.name.is_some()) {
            m.declaration.clone().unwrap()
        } else {
            let params: Vec<String> = p.params.iter().zip(&names).map(|(x, n)| join_type(&x.ty, n)).collect();
            format!("{} {}({})", p.return_type, p.name, params_text(&params))
        };
        let call = format!("{}({})", s.func, names.join(", "));
        let body = if p.returns_void() { format!("{call};") } else { format!("return {call};") };
        aspects.push((
            format!("{}.aspect", ident(&m.name)),
            format!("around: call({decl})\n{{\n    {body}\n}}\n"),
        ));
    }

    Ok(HarnessBundle {
        environment_c: em.out,
        aspects,
        entry_point: opts.entry_point.clone(),
        warnings,
    })
}
