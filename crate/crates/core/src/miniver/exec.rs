//! Path-by-path execution of a parsed program.
//!
//! Every nondeterministic value is a choice point. A run follows a given
//! prefix of choices and takes the first alternative afterwards; the explorer
//! enumerates all choice sequences depth first by re-execution.

use super::parse::{BinOp, Expr, Function, Init, Program, Stmt, StmtKind, UnOp};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bounds {
    /// Iterations per loop execution and jumps per label on one path.
    pub loop_bound: usize,
    pub nondet_values: Vec<i64>,
    pub max_paths: usize,
    pub max_steps: usize,
    pub max_depth: usize,
    pub time_limit: Option<std::time::Duration>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            loop_bound: 16,
            nondet_values: vec![0, 1],
            max_paths: 200_000,
            max_steps: 1_000_000,
            max_depth: 64,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Call,
    Return,
    /// Condition evaluated to the given outcome.
    Branch(bool),
    Statement,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    /// Called function for calls, returning function for returns, the
    /// executing function otherwise.
    pub function: String,
    pub line: usize,
    pub kind: EventKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathEnd {
    Completed,
    Error,
    /// An assumption failed.
    Infeasible,
    /// `abort()`, `exit()` and similar.
    Exited,
    Bound(String),
    Failure(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathResult {
    pub end: PathEnd,
    pub events: Vec<Event>,
    /// Chosen alternative and number of alternatives per choice point.
    pub choices: Vec<(usize, usize)>,
    pub lines: BTreeSet<usize>,
    pub functions: BTreeSet<String>,
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(i64),
    Goto(String),
}

enum Stop {
    Error,
    Infeasible,
    Exited,
    Bound(String),
    Failure(String),
}

type R<T> = Result<T, Stop>;

fn fail<T>(msg: impl Into<String>) -> R<T> {
    Err(Stop::Failure(msg.into()))
}

const REGION: i64 = 1 << 20;
const GLOBAL_BASE: i64 = 1 << 40;
const FUNC_BASE: i64 = 1 << 50;

pub fn binop(op: BinOp, a: i64, b: i64) -> Option<i64> {
    Some(match op {
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::Div => a.checked_div(b)?,
        BinOp::Rem => a.checked_rem(b)?,
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Shl => a.wrapping_shl(b as u32),
        BinOp::Shr => a.wrapping_shr(b as u32),
        BinOp::Lt => (a < b) as i64,
        BinOp::Gt => (a > b) as i64,
        BinOp::Le => (a <= b) as i64,
        BinOp::Ge => (a >= b) as i64,
        BinOp::Eq => (a == b) as i64,
        BinOp::Ne => (a != b) as i64,
        BinOp::BitAnd => a & b,
        BinOp::BitXor => a ^ b,
        BinOp::BitOr => a | b,
        BinOp::And => (a != 0 && b != 0) as i64,
        BinOp::Or => (a != 0 || b != 0) as i64,
    })
}

fn is_nondet(name: &str) -> bool {
    (name.starts_with("__VERIFIER_nondet_") || name.starts_with("ldv_undef_")) && !is_nondet_pointer(name)
}

fn is_nondet_pointer(name: &str) -> bool {
    matches!(name, "__VERIFIER_nondet_pointer" | "ldv_undef_ptr" | "ldv_undef_ptr_non_null")
}

const ALLOCATORS: &[&str] = &["malloc", "kmalloc", "ldv_malloc", "vmalloc", "ldv_xmalloc", "kmalloc_array"];
const ZERO_ALLOCATORS: &[&str] = &["calloc", "kzalloc", "kcalloc", "ldv_zalloc", "ldv_calloc", "vzalloc"];

struct Frame {
    function: String,
    scopes: Vec<HashMap<String, i64>>,
    /// Cells of bool locals, released on return.
    bools: HashSet<i64>,
}

struct Exec<'p> {
    prog: &'p Program,
    bounds: &'p Bounds,
    prefix: &'p [usize],
    choices: Vec<(usize, usize)>,
    mem: HashMap<(i64, String), i64>,
    zero_regions: HashSet<i64>,
    globals: HashMap<String, i64>,
    bool_cells: HashSet<i64>,
    func_ids: HashMap<String, i64>,
    func_by_id: HashMap<i64, String>,
    frames: Vec<Frame>,
    next_region: i64,
    next_global: i64,
    events: Vec<Event>,
    lines: BTreeSet<usize>,
    functions: BTreeSet<String>,
    jumps: HashMap<(String, String), usize>,
    steps: usize,
    line: usize,
    started: Instant,
}

impl<'p> Exec<'p> {
    fn new(prog: &'p Program, bounds: &'p Bounds, prefix: &'p [usize], started: Instant) -> Self {
        let mut func_ids = HashMap::new();
        let mut func_by_id = HashMap::new();
        for (i, name) in prog.functions.keys().enumerate() {
            let id = FUNC_BASE + (i as i64) * 16;
            func_ids.insert(name.clone(), id);
            func_by_id.insert(id, name.clone());
        }
        Exec {
            prog,
            bounds,
            prefix,
            choices: Vec::new(),
            mem: HashMap::new(),
            zero_regions: HashSet::new(),
            globals: HashMap::new(),
            bool_cells: HashSet::new(),
            func_ids,
            func_by_id,
            frames: Vec::new(),
            next_region: REGION,
            next_global: GLOBAL_BASE,
            events: Vec::new(),
            lines: BTreeSet::new(),
            functions: BTreeSet::new(),
            jumps: HashMap::new(),
            steps: 0,
            line: 0,
            started,
        }
    }

    fn choose(&mut self, n: usize) -> R<usize> {
        let k = self.choices.len();
        let c = self.prefix.get(k).copied().unwrap_or(0);
        if c >= n {
            return fail("choice replay diverged");
        }
        self.choices.push((c, n));
        Ok(c)
    }

    fn nondet(&mut self) -> R<i64> {
        let c = self.choose(self.bounds.nondet_values.len())?;
        Ok(self.bounds.nondet_values[c])
    }

    fn fresh(&mut self, zero: bool) -> i64 {
        let a = self.next_region;
        self.next_region += REGION;
        if zero {
            self.zero_regions.insert(a);
        }
        a
    }

    fn event(&mut self, kind: EventKind, function: &str, text: &str) {
        self.events.push(Event {
            function: function.to_string(),
            line: self.line,
            kind,
            text: text.to_string(),
        });
    }

    fn current_function(&self) -> String {
        self.frames.last().map(|f| f.function.clone()).unwrap_or_default()
    }

    fn step(&mut self, line: usize) -> R<()> {
        self.line = line;
        self.lines.insert(line);
        self.steps += 1;
        if self.steps > self.bounds.max_steps {
            return Err(Stop::Bound(format!("more than {} steps on one path", self.bounds.max_steps)));
        }
        if self.steps.is_multiple_of(4096) {
            if let Some(t) = self.bounds.time_limit {
                if self.started.elapsed() > t {
                    return Err(Stop::Bound("time limit".into()));
                }
            }
        }
        Ok(())
    }

    fn read(&mut self, cell: (i64, String)) -> R<i64> {
        if let Some(v) = self.mem.get(&cell) {
            return Ok(*v);
        }
        let region = cell.0 - cell.0.rem_euclid(REGION);
        let v = if cell.0 >= GLOBAL_BASE || self.zero_regions.contains(&region) {
            0
        } else {
            self.nondet()?
        };
        self.mem.insert(cell, v);
        Ok(v)
    }

    fn write(&mut self, cell: (i64, String), v: i64) {
        let v = if cell.1.is_empty() && self.bool_cells.contains(&cell.0) {
            (v != 0) as i64
        } else {
            v
        };
        self.mem.insert(cell, v);
    }

    fn lookup(&self, name: &str) -> Option<i64> {
        if let Some(f) = self.frames.last() {
            for s in f.scopes.iter().rev() {
                if let Some(a) = s.get(name) {
                    return Some(*a);
                }
            }
        }
        self.globals.get(name).copied()
    }

    fn declare_local(&mut self, name: &str, is_bool: bool) -> i64 {
        let a = self.fresh(false);
        if is_bool {
            self.bool_cells.insert(a);
        }
        let f = self.frames.last_mut().expect("locals live in frames");
        f.scopes.last_mut().expect("frames have a scope").insert(name.to_string(), a);
        if is_bool {
            f.bools.insert(a);
        }
        a
    }

    fn init(&mut self, addr: i64, field: &str, init: &Init) -> R<()> {
        match init {
            Init::Expr(e) => {
                let v = self.eval(e)?;
                self.write((addr, field.to_string()), v);
            }
            Init::List(items) => {
                for (name, sub) in items {
                    let f = if field.is_empty() { name.clone() } else { format!("{field}.{name}") };
                    self.init(addr, &f, sub)?;
                }
            }
        }
        Ok(())
    }

    fn setup_globals(&mut self) -> R<()> {
        for g in &self.prog.globals {
            let a = self.next_global;
            self.next_global += REGION;
            if g.decl.is_bool {
                self.bool_cells.insert(a);
            }
            self.globals.insert(g.decl.name.clone(), a);
        }
        for g in &self.prog.globals {
            if let Some(init) = &g.decl.init {
                let a = self.globals[&g.decl.name];
                self.line = g.line;
                self.init(a, "", init)?;
            }
        }
        Ok(())
    }

    fn lvalue(&mut self, e: &Expr) -> R<(i64, String)> {
        match e {
            Expr::Var(n) => match self.lookup(n) {
                Some(a) => Ok((a, String::new())),
                None => fail(format!("line {}: undeclared identifier {n}", self.line)),
            },
            Expr::Deref(p) => Ok((self.eval(p)?, String::new())),
            Expr::Index(b, i) => {
                let base = self.eval(b)?;
                let i = self.eval(i)?;
                Ok((base.wrapping_add(i), String::new()))
            }
            Expr::Arrow(p, f) => Ok((self.eval(p)?, f.clone())),
            Expr::Member(s, f) => {
                let (a, base) = self.lvalue(s)?;
                Ok((a, if base.is_empty() { f.clone() } else { format!("{base}.{f}") }))
            }
            Expr::Cast { expr, .. } => self.lvalue(expr),
            _ => fail(format!("line {}: expression is not assignable", self.line)),
        }
    }

    fn eval(&mut self, e: &Expr) -> R<i64> {
        match e {
            Expr::Int(v) => Ok(*v),
            Expr::Str(n) => Ok(GLOBAL_BASE / 2 + (*n as i64) * REGION),
            Expr::Var(n) => {
                if self.lookup(n).is_none() {
                    if let Some(id) = self.func_ids.get(n) {
                        return Ok(*id);
                    }
                }
                let cell = self.lvalue(e)?;
                self.read(cell)
            }
            Expr::Unary(op, x) => {
                let v = self.eval(x)?;
                Ok(match op {
                    UnOp::Neg => v.wrapping_neg(),
                    UnOp::Plus => v,
                    UnOp::Not => (v == 0) as i64,
                    UnOp::BitNot => !v,
                })
            }
            Expr::Binary(BinOp::And, a, b) => Ok((self.eval(a)? != 0 && self.eval(b)? != 0) as i64),
            Expr::Binary(BinOp::Or, a, b) => Ok((self.eval(a)? != 0 || self.eval(b)? != 0) as i64),
            Expr::Binary(op, a, b) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                match binop(*op, x, y) {
                    Some(v) => Ok(v),
                    None => fail(format!("line {}: division by zero", self.line)),
                }
            }
            Expr::Assign(op, l, r) => {
                let cell = self.lvalue(l)?;
                let rv = self.eval(r)?;
                let v = match op {
                    None => rv,
                    Some(op) => {
                        let cur = self.read(cell.clone())?;
                        match binop(*op, cur, rv) {
                            Some(v) => v,
                            None => return fail(format!("line {}: division by zero", self.line)),
                        }
                    }
                };
                self.write(cell.clone(), v);
                Ok(self.mem[&cell])
            }
            Expr::IncDec { target, delta, prefix } => {
                let cell = self.lvalue(target)?;
                let old = self.read(cell.clone())?;
                self.write(cell.clone(), old.wrapping_add(*delta));
                Ok(if *prefix { self.mem[&cell] } else { old })
            }
            Expr::Cond(c, a, b) => {
                if self.eval(c)? != 0 {
                    self.eval(a)
                } else {
                    self.eval(b)
                }
            }
            Expr::Comma(xs) => {
                let mut v = 0;
                for x in xs {
                    v = self.eval(x)?;
                }
                Ok(v)
            }
            Expr::Cast { to_bool, expr } => {
                let v = self.eval(expr)?;
                Ok(if *to_bool { (v != 0) as i64 } else { v })
            }
            Expr::AddrOf(x) => match &**x {
                Expr::Var(n) if self.lookup(n).is_none() && self.func_ids.contains_key(n) => Ok(self.func_ids[n]),
                _ => {
                    let (a, f) = self.lvalue(x)?;
                    if f.is_empty() {
                        Ok(a)
                    } else {
                        // Field addresses are opaque but stable.
                        let h = f.bytes().fold(0i64, |h, b| h.wrapping_mul(31).wrapping_add(b as i64));
                        Ok(a + 1 + h.rem_euclid(REGION / 2))
                    }
                }
            },
            Expr::Deref(_) | Expr::Index(..) | Expr::Arrow(..) | Expr::Member(..) => {
                let cell = self.lvalue(e)?;
                self.read(cell)
            }
            Expr::Call(callee, args) => self.call(callee, args),
        }
    }

    fn call(&mut self, callee: &Expr, args: &[Expr]) -> R<i64> {
        let name = match callee {
            Expr::Var(n) if self.lookup(n).is_none() => n.clone(),
            other => {
                let v = self.eval(other)?;
                match self.func_by_id.get(&v) {
                    Some(n) => n.clone(),
                    None => {
                        for a in args {
                            self.eval(a)?;
                        }
                        return self.nondet();
                    }
                }
            }
        };
        let mut vals = Vec::with_capacity(args.len());
        for a in args {
            vals.push(self.eval(a)?);
        }
        if let Some(f) = self.prog.functions.get(&name) {
            return self.invoke(f, &vals);
        }
        self.builtin(&name, &vals)
    }

    fn builtin(&mut self, name: &str, vals: &[i64]) -> R<i64> {
        let error = match name {
            "__VERIFIER_error" | "reach_error" => true,
            "ldv_assert" | "__VERIFIER_assert" => vals.first().is_none_or(|v| *v == 0),
            _ => false,
        };
        if error {
            let f = self.current_function();
            self.event(EventKind::Error, &f, name);
            return Err(Stop::Error);
        }
        match name {
            "ldv_assert" | "__VERIFIER_assert" => Ok(0),
            "__VERIFIER_assume" | "ldv_assume" | "assume_abort_if_not" => {
                if vals.first().is_some_and(|v| *v == 0) {
                    Err(Stop::Infeasible)
                } else {
                    Ok(0)
                }
            }
            "abort" | "exit" | "__VERIFIER_silent_exit" | "ldv_stop" => Err(Stop::Exited),
            "external_allocated_data" | "ldv_external_allocated_data" => Ok(self.fresh(false)),
            n if is_nondet_pointer(n) => {
                if self.choose(2)? == 0 {
                    Ok(self.fresh(false))
                } else {
                    Ok(0)
                }
            }
            n if ALLOCATORS.contains(&n) || ZERO_ALLOCATORS.contains(&n) => {
                if self.choose(2)? == 0 {
                    Ok(self.fresh(ZERO_ALLOCATORS.contains(&n)))
                } else {
                    Ok(0)
                }
            }
            "free" | "kfree" | "ldv_free" | "vfree" => Ok(0),
            n if is_nondet(n) => self.nondet(),
            // Other undefined functions return an arbitrary value as well.
            _ => self.nondet(),
        }
    }

    fn invoke(&mut self, f: &'p Function, vals: &[i64]) -> R<i64> {
        if self.frames.len() >= self.bounds.max_depth {
            return Err(Stop::Bound(format!("call depth above {}", self.bounds.max_depth)));
        }
        if vals.len() < f.params.len() {
            return fail(format!("line {}: {} called with too few arguments", self.line, f.name));
        }
        if self.line == 0 {
            self.line = f.line;
        }
        self.event(EventKind::Call, &f.name, &f.name);
        self.functions.insert(f.name.clone());
        self.lines.insert(f.line);
        self.frames.push(Frame {
            function: f.name.clone(),
            scopes: vec![HashMap::new()],
            bools: HashSet::new(),
        });
        for (p, v) in f.params.iter().zip(vals) {
            let a = self.declare_local(p, false);
            self.mem.insert((a, String::new()), *v);
        }
        let flow = self.run_block(&f.body, 0, None)?;
        let value = match flow {
            Flow::Return(v) => v,
            Flow::Normal => {
                self.step(f.end_line)?;
                0
            }
            Flow::Goto(l) => return fail(format!("{}: label {l} not found", f.name)),
            Flow::Break | Flow::Continue => return fail(format!("{}: break or continue outside a loop", f.name)),
        };
        let frame = self.frames.pop().expect("frame pushed above");
        for a in frame.bools {
            self.bool_cells.remove(&a);
        }
        self.event(EventKind::Return, &f.name, &f.name);
        Ok(value)
    }

    fn run_block(&mut self, stmts: &'p [Stmt], mut i: usize, mut entry: Option<String>) -> R<Flow> {
        if let Some(f) = self.frames.last_mut() {
            f.scopes.push(HashMap::new());
        }
        let flow = loop {
            if i >= stmts.len() {
                break Flow::Normal;
            }
            let flow = match entry.take() {
                Some(l) => self.enter_at_label(&stmts[i], &l)?,
                None => self.exec(&stmts[i])?,
            };
            match flow {
                Flow::Normal => i += 1,
                Flow::Goto(l) => match stmts.iter().position(|s| contains_label(s, &l)) {
                    Some(j) => {
                        let key = (self.current_function(), l.clone());
                        let n = self.jumps.entry(key).or_insert(0);
                        *n += 1;
                        if *n > self.bounds.loop_bound {
                            return Err(Stop::Bound(format!("more than {} jumps to {l}", self.bounds.loop_bound)));
                        }
                        i = j;
                        entry = Some(l);
                    }
                    None => break Flow::Goto(l),
                },
                other => break other,
            }
        };
        if let Some(f) = self.frames.last_mut() {
            f.scopes.pop();
        }
        Ok(flow)
    }

    fn enter_at_label(&mut self, s: &'p Stmt, label: &str) -> R<Flow> {
        match &s.kind {
            StmtKind::Label(n, inner) if n == label => self.exec(inner),
            StmtKind::Label(_, inner) => self.enter_at_label(inner, label),
            StmtKind::Block(xs) => {
                let j = xs.iter().position(|x| contains_label(x, label)).expect("label located before entry");
                self.run_block(xs, j, Some(label.to_string()))
            }
            _ => fail(format!("cannot jump to {label}")),
        }
    }

    fn cond(&mut self, s: &Stmt, c: &Expr) -> R<bool> {
        self.step(s.line)?;
        let v = self.eval(c)? != 0;
        let f = self.current_function();
        self.event(EventKind::Branch(v), &f, &s.text);
        Ok(v)
    }

    fn exec(&mut self, s: &'p Stmt) -> R<Flow> {
        match &s.kind {
            StmtKind::Empty => Ok(Flow::Normal),
            StmtKind::Expr(e) => {
                self.step(s.line)?;
                let f = self.current_function();
                self.event(EventKind::Statement, &f, &s.text);
                self.eval(e)?;
                Ok(Flow::Normal)
            }
            StmtKind::Decl(ds) => {
                self.step(s.line)?;
                let f = self.current_function();
                if ds.iter().any(|d| d.init.is_some()) {
                    self.event(EventKind::Statement, &f, &s.text);
                }
                for d in ds {
                    // Initializers see the variable being declared.
                    let a = self.declare_local(&d.name, d.is_bool);
                    if let Some(init) = &d.init {
                        self.init(a, "", init)?;
                    }
                }
                Ok(Flow::Normal)
            }
            StmtKind::Block(xs) => self.run_block(xs, 0, None),
            StmtKind::If(c, then, els) => {
                if self.cond(s, c)? {
                    self.exec(then)
                } else if let Some(e) = els {
                    self.exec(e)
                } else {
                    Ok(Flow::Normal)
                }
            }
            StmtKind::While(c, body) => {
                let mut n = 0;
                while self.cond(s, c)? {
                    n += 1;
                    if n > self.bounds.loop_bound {
                        return Err(Stop::Bound(format!("loop at line {} unrolled {} times", s.line, self.bounds.loop_bound)));
                    }
                    match self.exec(body)? {
                        Flow::Break => break,
                        Flow::Normal | Flow::Continue => {}
                        other => return Ok(other),
                    }
                }
                Ok(Flow::Normal)
            }
            StmtKind::DoWhile(body, c) => {
                let mut n = 0;
                loop {
                    n += 1;
                    if n > self.bounds.loop_bound {
                        return Err(Stop::Bound(format!("loop at line {} unrolled {} times", s.line, self.bounds.loop_bound)));
                    }
                    match self.exec(body)? {
                        Flow::Break => break,
                        Flow::Normal | Flow::Continue => {}
                        other => return Ok(other),
                    }
                    if !self.cond(s, c)? {
                        break;
                    }
                }
                Ok(Flow::Normal)
            }
            StmtKind::For(init, c, step, body) => {
                if let Some(f) = self.frames.last_mut() {
                    f.scopes.push(HashMap::new());
                }
                if let Some(i) = init {
                    self.exec(i)?;
                }
                let mut n = 0;
                let flow = loop {
                    let go = match c {
                        Some(c) => self.cond(s, c)?,
                        None => true,
                    };
                    if !go {
                        break Flow::Normal;
                    }
                    n += 1;
                    if n > self.bounds.loop_bound {
                        return Err(Stop::Bound(format!("loop at line {} unrolled {} times", s.line, self.bounds.loop_bound)));
                    }
                    match self.exec(body)? {
                        Flow::Break => break Flow::Normal,
                        Flow::Normal | Flow::Continue => {}
                        other => break other,
                    }
                    if let Some(e) = step {
                        self.eval(e)?;
                    }
                };
                if let Some(f) = self.frames.last_mut() {
                    f.scopes.pop();
                }
                Ok(flow)
            }
            StmtKind::Switch(c, body) => {
                self.step(s.line)?;
                let v = self.eval(c)?;
                let StmtKind::Block(xs) = &body.kind else {
                    return fail(format!("line {}: switch body must be a block", s.line));
                };
                let target = xs
                    .iter()
                    .position(|x| case_matches(x, Some(v)))
                    .or_else(|| xs.iter().position(|x| case_matches(x, None)));
                let f = self.current_function();
                self.event(EventKind::Branch(target.is_some()), &f, &s.text);
                let Some(j) = target else {
                    return Ok(Flow::Normal);
                };
                match self.run_block(xs, j, None)? {
                    Flow::Break => Ok(Flow::Normal),
                    other => Ok(other),
                }
            }
            StmtKind::Case(_, inner) | StmtKind::Default(inner) => self.exec(inner),
            StmtKind::Return(e) => {
                self.step(s.line)?;
                let f = self.current_function();
                self.event(EventKind::Statement, &f, &s.text);
                let v = match e {
                    Some(e) => self.eval(e)?,
                    None => 0,
                };
                Ok(Flow::Return(v))
            }
            StmtKind::Break => Ok(Flow::Break),
            StmtKind::Continue => Ok(Flow::Continue),
            StmtKind::Goto(l) => {
                self.step(s.line)?;
                Ok(Flow::Goto(l.clone()))
            }
            StmtKind::Label(_, inner) => self.exec(inner),
        }
    }
}

fn contains_label(s: &Stmt, label: &str) -> bool {
    match &s.kind {
        StmtKind::Label(n, inner) => n == label || contains_label(inner, label),
        StmtKind::Block(xs) => xs.iter().any(|x| contains_label(x, label)),
        _ => false,
    }
}

fn case_matches(s: &Stmt, v: Option<i64>) -> bool {
    match (&s.kind, v) {
        (StmtKind::Case(c, inner), Some(v)) => *c == v || case_matches(inner, Some(v)),
        (StmtKind::Case(_, inner), None) => case_matches(inner, None),
        (StmtKind::Default(_), None) => true,
        (StmtKind::Default(inner), Some(v)) => case_matches(inner, Some(v)),
        _ => false,
    }
}

/// Execute one path following `prefix`.
pub fn run_path(prog: &Program, entry: &str, bounds: &Bounds, prefix: &[usize], started: Instant) -> PathResult {
    let mut ex = Exec::new(prog, bounds, prefix, started);
    let end = match ex.setup_globals().and_then(|_| match prog.functions.get(entry) {
        Some(f) => {
            let mut args = Vec::new();
            for _ in &f.params {
                args.push(ex.nondet()?);
            }
            ex.line = 0;
            ex.invoke(f, &args).map(|_| ())
        }
        None => fail(format!("entry function {entry} is not defined")),
    }) {
        Ok(()) => PathEnd::Completed,
        Err(Stop::Error) => PathEnd::Error,
        Err(Stop::Infeasible) => PathEnd::Infeasible,
        Err(Stop::Exited) => PathEnd::Exited,
        Err(Stop::Bound(m)) => PathEnd::Bound(m),
        Err(Stop::Failure(m)) => PathEnd::Failure(m),
    };
    PathResult {
        end,
        events: ex.events,
        choices: ex.choices,
        lines: ex.lines,
        functions: ex.functions,
    }
}

/// Prefix of the next path in depth-first order, if any.
pub fn next_prefix(choices: &[(usize, usize)]) -> Option<Vec<usize>> {
    let i = choices.iter().rposition(|(c, n)| c + 1 < *n)?;
    let mut p: Vec<usize> = choices[..i].iter().map(|(c, _)| *c).collect();
    p.push(choices[i].0 + 1);
    Some(p)
}
