//! Parser for the C subset the checker executes.

use crate::clex::{self, Token, TokenKind};
use crate::cscan::{parse_params, scan_items, ItemKind};
use std::collections::{BTreeMap, HashSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Shl,
    Shr,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    BitAnd,
    BitXor,
    BitOr,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
    Plus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    /// String literal, numbered for a stable address.
    Str(usize),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `lhs op= rhs`; plain assignment has no operator.
    Assign(Option<BinOp>, Box<Expr>, Box<Expr>),
    /// `++x`/`--x` (prefix) or `x++`/`x--` (postfix) as a delta.
    IncDec { target: Box<Expr>, delta: i64, prefix: bool },
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Box<Expr>, Vec<Expr>),
    Member(Box<Expr>, String),
    Arrow(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Deref(Box<Expr>),
    AddrOf(Box<Expr>),
    /// Casts to `bool`/`_Bool` normalize to 0 or 1; others are transparent.
    Cast { to_bool: bool, expr: Box<Expr> },
    Comma(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Expr(Expr),
    /// `{ .field = v, v2, ... }`; positional entries get their index as name.
    List(Vec<(String, Init)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Declarator {
    pub name: String,
    pub init: Option<Init>,
    /// Declared with a bool type and no pointer.
    pub is_bool: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub line: usize,
    /// Source text of the statement head, used in traces.
    pub text: String,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Empty,
    Expr(Expr),
    Decl(Vec<Declarator>),
    Block(Vec<Stmt>),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    While(Expr, Box<Stmt>),
    DoWhile(Box<Stmt>, Expr),
    For(Option<Box<Stmt>>, Option<Expr>, Option<Expr>, Box<Stmt>),
    Switch(Expr, Box<Stmt>),
    Case(i64, Box<Stmt>),
    Default(Box<Stmt>),
    Return(Option<Expr>),
    Break,
    Continue,
    Goto(String),
    Label(String, Box<Stmt>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub line: usize,
    /// Line of the closing brace.
    pub end_line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Global {
    pub decl: Declarator,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub functions: BTreeMap<String, Function>,
    pub globals: Vec<Global>,
    /// Lines holding a statement or function header; the coverage universe.
    pub code_lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

type PResult<T> = Result<T, ParseError>;

pub fn parse_program(src: &str) -> PResult<Program> {
    let lexed = clex::lex(src).map_err(|e| ParseError {
        line: e.line,
        message: e.message,
    })?;
    let items = scan_items(&lexed).map_err(|e| ParseError {
        line: e.line,
        message: e.message,
    })?;
    let toks: Vec<Token> = lexed.tokens;
    let mut typedefs: HashSet<String> = HashSet::new();
    for it in &items {
        if it.kind == ItemKind::Type && toks[it.first].is("typedef") {
            if let Some(n) = &it.name {
                typedefs.insert(n.clone());
            }
        }
    }
    let mut prog = Program::default();
    let mut p = Parser {
        toks: &toks,
        src,
        pos: 0,
        end: 0,
        typedefs: &typedefs,
        strings: 0,
        lines: Vec::new(),
    };
    for it in &items {
        match it.kind {
            ItemKind::Function => {
                let (bo, bc) = it.body.expect("function items have bodies");
                let name = it.name.clone().unwrap_or_default();
                let params = it
                    .params_open
                    .map(|o| parse_params(&toks, o))
                    .unwrap_or_default()
                    .into_iter()
                    .enumerate()
                    .map(|(i, q)| q.name.unwrap_or_else(|| format!("__arg{i}")))
                    .collect();
                p.pos = bo + 1;
                p.end = bc;
                p.lines.push(it.line);
                let mut body = Vec::new();
                while p.pos < p.end {
                    body.push(p.statement()?);
                }
                p.lines.push(toks[bc].line);
                if prog.functions.contains_key(&name) {
                    return Err(ParseError {
                        line: it.line,
                        message: format!("function {name} is defined twice"),
                    });
                }
                prog.functions.insert(
                    name.clone(),
                    Function {
                        name,
                        params,
                        body,
                        line: it.line,
                        end_line: toks[bc].line,
                    },
                );
            }
            ItemKind::Variable => {
                if toks[it.first].is("extern") {
                    continue;
                }
                p.pos = it.first;
                p.end = it.last + 1;
                for decl in p.declaration()? {
                    prog.globals.push(Global { decl, line: it.line });
                }
            }
            _ => {}
        }
    }
    let mut lines = p.lines;
    lines.sort_unstable();
    lines.dedup();
    prog.code_lines = lines;
    Ok(prog)
}

struct Parser<'a> {
    toks: &'a [Token],
    src: &'a str,
    pos: usize,
    end: usize,
    typedefs: &'a HashSet<String>,
    strings: usize,
    lines: Vec<usize>,
}

const ASSIGN_OPS: &[(&str, Option<BinOp>)] = &[
    ("=", None),
    ("+=", Some(BinOp::Add)),
    ("-=", Some(BinOp::Sub)),
    ("*=", Some(BinOp::Mul)),
    ("/=", Some(BinOp::Div)),
    ("%=", Some(BinOp::Rem)),
    ("&=", Some(BinOp::BitAnd)),
    ("|=", Some(BinOp::BitOr)),
    ("^=", Some(BinOp::BitXor)),
    ("<<=", Some(BinOp::Shl)),
    (">>=", Some(BinOp::Shr)),
];

/// Binary operators by precedence level, loosest first.
const LEVELS: &[&[(&str, BinOp)]] = &[
    &[("||", BinOp::Or)],
    &[("&&", BinOp::And)],
    &[("|", BinOp::BitOr)],
    &[("^", BinOp::BitXor)],
    &[("&", BinOp::BitAnd)],
    &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
    &[("<", BinOp::Lt), (">", BinOp::Gt), ("<=", BinOp::Le), (">=", BinOp::Ge)],
    &[("<<", BinOp::Shl), (">>", BinOp::Shr)],
    &[("+", BinOp::Add), ("-", BinOp::Sub)],
    &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
];

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        let mut k = self.pos;
        while k < self.end {
            if self.toks[k].kind != TokenKind::Directive {
                return Some(&self.toks[k]);
            }
            k += 1;
        }
        None
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        let mut k = self.pos;
        let mut seen = 0;
        while k < self.end {
            if self.toks[k].kind != TokenKind::Directive {
                if seen == n {
                    return Some(&self.toks[k]);
                }
                seen += 1;
            }
            k += 1;
        }
        None
    }

    fn skip_directives(&mut self) {
        while self.pos < self.end && self.toks[self.pos].kind == TokenKind::Directive {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> PResult<&'a Token> {
        self.skip_directives();
        if self.pos >= self.end {
            return self.err_here("unexpected end of input");
        }
        let t = &self.toks[self.pos];
        self.pos += 1;
        Ok(t)
    }

    fn line(&self) -> usize {
        self.peek()
            .map(|t| t.line)
            .unwrap_or_else(|| self.toks.get(self.end.saturating_sub(1)).map_or(0, |t| t.line))
    }

    fn err_here<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError {
            line: self.line(),
            message: message.into(),
        })
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.is(text))
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.skip_directives();
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, text: &str) -> PResult<()> {
        if self.eat(text) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".to_string(), |t| format!("'{}'", t.text));
            self.err_here(format!("expected '{text}', found {found}"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        let t = self.next()?;
        if t.is_ident() && !clex::is_keyword(&t.text) {
            Ok(t.text.clone())
        } else {
            Err(ParseError {
                line: t.line,
                message: format!("expected an identifier, found '{}'", t.text),
            })
        }
    }

    /// Source text from token `from` up to the current position, one line.
    fn text_from(&self, from: usize) -> String {
        let last = self.pos.saturating_sub(1).max(from);
        let (Some(a), Some(b)) = (self.toks.get(from), self.toks.get(last)) else {
            return String::new();
        };
        clex::normalize_ws(&self.src[a.start..b.end.max(a.start)])
    }

    fn starts_declaration(&self) -> bool {
        let k = self.first_non_directive();
        if k >= self.end {
            return false;
        }
        let set: HashSet<&str> = self.typedefs.iter().map(String::as_str).collect();
        let t = &self.toks[k];
        if t.is("typedef") {
            return true;
        }
        crate::buildbase::starts_declaration(&self.toks[..self.end], k, &set)
    }

    fn first_non_directive(&self) -> usize {
        let mut k = self.pos;
        while k < self.end && self.toks[k].kind == TokenKind::Directive {
            k += 1;
        }
        k
    }

    fn statement(&mut self) -> PResult<Stmt> {
        self.skip_directives();
        let line = self.line();
        let start = self.pos;
        let t = self.peek().ok_or(ParseError {
            line,
            message: "expected a statement".into(),
        })?;
        // Labels: `name:` but not `a ? b : c`.
        if t.is_ident()
            && !clex::is_keyword(&t.text)
            && self.peek_at(1).is_some_and(|n| n.is(":"))
            && !t.is("default")
        {
            let name = self.ident()?;
            self.expect(":")?;
            let text = format!("{name}:");
            let inner = if self.pos >= self.end || self.at("}") {
                Stmt {
                    line,
                    text: String::new(),
                    kind: StmtKind::Empty,
                }
            } else {
                self.statement()?
            };
            return Ok(Stmt {
                line,
                text,
                kind: StmtKind::Label(name, Box::new(inner)),
            });
        }
        let kind = match t.text.as_str() {
            "{" => {
                self.pos = self.first_non_directive() + 1;
                let mut body = Vec::new();
                while !self.at("}") {
                    if self.peek().is_none() {
                        return self.err_here("unterminated block");
                    }
                    body.push(self.statement()?);
                }
                self.expect("}")?;
                return Ok(Stmt {
                    line,
                    text: String::new(),
                    kind: StmtKind::Block(body),
                });
            }
            ";" => {
                self.next()?;
                StmtKind::Empty
            }
            "if" => {
                self.next()?;
                self.expect("(")?;
                let c = self.expr()?;
                self.expect(")")?;
                let text = self.text_from(start);
                self.lines.push(line);
                let then = Box::new(self.statement()?);
                let els = if self.eat("else") {
                    Some(Box::new(self.statement()?))
                } else {
                    None
                };
                return Ok(Stmt {
                    line,
                    text,
                    kind: StmtKind::If(c, then, els),
                });
            }
            "while" => {
                self.next()?;
                self.expect("(")?;
                let c = self.expr()?;
                self.expect(")")?;
                let text = self.text_from(start);
                self.lines.push(line);
                let body = Box::new(self.statement()?);
                return Ok(Stmt {
                    line,
                    text,
                    kind: StmtKind::While(c, body),
                });
            }
            "do" => {
                self.next()?;
                let body = Box::new(self.statement()?);
                self.expect("while")?;
                self.expect("(")?;
                let c = self.expr()?;
                self.expect(")")?;
                self.expect(";")?;
                self.lines.push(line);
                return Ok(Stmt {
                    line,
                    text: "do".into(),
                    kind: StmtKind::DoWhile(body, c),
                });
            }
            "for" => {
                self.next()?;
                self.expect("(")?;
                let init = if self.eat(";") {
                    None
                } else {
                    Some(Box::new(self.simple_statement()?))
                };
                let cond = if self.at(";") { None } else { Some(self.expr()?) };
                self.expect(";")?;
                let step = if self.at(")") { None } else { Some(self.expr()?) };
                self.expect(")")?;
                let text = self.text_from(start);
                self.lines.push(line);
                let body = Box::new(self.statement()?);
                return Ok(Stmt {
                    line,
                    text,
                    kind: StmtKind::For(init, cond, step, body),
                });
            }
            "switch" => {
                self.next()?;
                self.expect("(")?;
                let c = self.expr()?;
                self.expect(")")?;
                let text = self.text_from(start);
                self.lines.push(line);
                let body = Box::new(self.statement()?);
                return Ok(Stmt {
                    line,
                    text,
                    kind: StmtKind::Switch(c, body),
                });
            }
            "case" => {
                self.next()?;
                let e = self.conditional()?;
                let v = const_eval(&e).ok_or(ParseError {
                    line,
                    message: "case label is not a constant".into(),
                })?;
                self.expect(":")?;
                let inner = self.statement()?;
                return Ok(Stmt {
                    line,
                    text: format!("case {v}:"),
                    kind: StmtKind::Case(v, Box::new(inner)),
                });
            }
            "default" => {
                self.next()?;
                self.expect(":")?;
                let inner = self.statement()?;
                return Ok(Stmt {
                    line,
                    text: "default:".into(),
                    kind: StmtKind::Default(Box::new(inner)),
                });
            }
            "return" => {
                self.next()?;
                let e = if self.at(";") { None } else { Some(self.expr()?) };
                self.expect(";")?;
                StmtKind::Return(e)
            }
            "break" => {
                self.next()?;
                self.expect(";")?;
                StmtKind::Break
            }
            "continue" => {
                self.next()?;
                self.expect(";")?;
                StmtKind::Continue
            }
            "goto" => {
                self.next()?;
                let l = self.ident()?;
                self.expect(";")?;
                StmtKind::Goto(l)
            }
            _ => return self.simple_statement(),
        };
        self.lines.push(line);
        Ok(Stmt {
            line,
            text: self.text_from(start),
            kind,
        })
    }

    /// Declaration or expression statement, including its `;`.
    fn simple_statement(&mut self) -> PResult<Stmt> {
        self.skip_directives();
        let line = self.line();
        let start = self.pos;
        let kind = if self.starts_declaration() {
            let ds = self.declaration()?;
            StmtKind::Decl(ds)
        } else {
            let e = self.expr()?;
            self.expect(";")?;
            StmtKind::Expr(e)
        };
        self.lines.push(line);
        Ok(Stmt {
            line,
            text: self.text_from(start),
            kind,
        })
    }

    /// A declaration up to and including `;`.
    fn declaration(&mut self) -> PResult<Vec<Declarator>> {
        let mut is_bool = false;
        if self.eat("typedef") {
            while !self.at(";") {
                self.next()?;
            }
            self.expect(";")?;
            return Ok(Vec::new());
        }
        // Specifiers: everything up to the first declarator.
        loop {
            let Some(t) = self.peek() else {
                return self.err_here("unterminated declaration");
            };
            if t.is("struct") || t.is("union") || t.is("enum") {
                self.next()?;
                if self.peek().is_some_and(|t| t.is_ident()) {
                    self.next()?;
                }
                if self.at("{") {
                    self.skip_group()?;
                }
                continue;
            }
            if t.is("bool") || t.is("_Bool") {
                is_bool = true;
            }
            let is_spec = clex::is_type_word(&t.text)
                || self.typedefs.contains(&t.text)
                || t.is("__attribute__")
                || (t.is_ident()
                    && !clex::is_keyword(&t.text)
                    && self.peek_at(1).is_some_and(|n| n.is_ident() || n.is("*")));
            if !is_spec {
                break;
            }
            self.next()?;
            if t.is("__attribute__") {
                self.skip_group()?;
            }
        }
        let mut out = Vec::new();
        if self.eat(";") {
            return Ok(out);
        }
        loop {
            let mut pointer = false;
            while self.eat("*") || self.eat("const") || self.eat("volatile") || self.eat("restrict") {
                pointer = true;
            }
            let name = if self.at("(") {
                // `(*name)(...)` function pointer.
                self.next()?;
                while self.eat("*") {}
                let n = self.ident()?;
                self.expect(")")?;
                pointer = true;
                n
            } else {
                self.ident()?
            };
            while self.at("[") || self.at("(") {
                self.skip_group()?;
            }
            while self.at("__attribute__") {
                self.next()?;
                self.skip_group()?;
            }
            let init = if self.eat("=") { Some(self.initializer()?) } else { None };
            out.push(Declarator {
                name,
                init,
                is_bool: is_bool && !pointer,
            });
            if self.eat(",") {
                continue;
            }
            self.expect(";")?;
            return Ok(out);
        }
    }

    fn skip_group(&mut self) -> PResult<()> {
        self.skip_directives();
        let open = self.pos;
        let close = clex::matching_close(&self.toks[..self.end], open).ok_or(ParseError {
            line: self.line(),
            message: "unbalanced brackets".into(),
        })?;
        self.pos = close + 1;
        Ok(())
    }

    fn initializer(&mut self) -> PResult<Init> {
        if !self.eat("{") {
            return Ok(Init::Expr(self.assignment()?));
        }
        let mut items = Vec::new();
        let mut idx = 0;
        while !self.eat("}") {
            let name = if self.eat(".") {
                let n = self.ident()?;
                self.expect("=")?;
                n
            } else if self.at("[") {
                self.next()?;
                let e = self.conditional()?;
                self.expect("]")?;
                self.expect("=")?;
                const_eval(&e).map(|v| v.to_string()).unwrap_or_else(|| idx.to_string())
            } else {
                idx.to_string()
            };
            items.push((name, self.initializer()?));
            idx += 1;
            if !self.eat(",") {
                self.expect("}")?;
                break;
            }
        }
        Ok(Init::List(items))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let first = self.assignment()?;
        if !self.at(",") {
            return Ok(first);
        }
        let mut xs = vec![first];
        while self.eat(",") {
            xs.push(self.assignment()?);
        }
        Ok(Expr::Comma(xs))
    }

    fn assignment(&mut self) -> PResult<Expr> {
        let lhs = self.conditional()?;
        if let Some(t) = self.peek() {
            if let Some((_, op)) = ASSIGN_OPS.iter().find(|(s, _)| t.is_punct(s)) {
                self.next()?;
                let rhs = self.assignment()?;
                return Ok(Expr::Assign(*op, Box::new(lhs), Box::new(rhs)));
            }
        }
        Ok(lhs)
    }

    fn conditional(&mut self) -> PResult<Expr> {
        let c = self.binary(0)?;
        if self.eat("?") {
            let a = self.expr()?;
            self.expect(":")?;
            let b = self.conditional()?;
            return Ok(Expr::Cond(Box::new(c), Box::new(a), Box::new(b)));
        }
        Ok(c)
    }

    fn binary(&mut self, level: usize) -> PResult<Expr> {
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(t) = self.peek() {
            let Some((_, op)) = LEVELS[level].iter().find(|(s, _)| t.is_punct(s)) else {
                break;
            };
            self.next()?;
            let rhs = self.binary(level + 1)?;
            lhs = Expr::Binary(*op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn is_type_start(&self, t: &Token) -> bool {
        (clex::is_type_word(&t.text) && !t.is("static") && !t.is("extern")) || self.typedefs.contains(&t.text)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let t = self.peek().ok_or(ParseError {
            line: self.line(),
            message: "expected an expression".into(),
        })?;
        let op = match t.text.as_str() {
            "-" if t.kind == TokenKind::Punct => Some(UnOp::Neg),
            "+" if t.kind == TokenKind::Punct => Some(UnOp::Plus),
            "!" => Some(UnOp::Not),
            "~" => Some(UnOp::BitNot),
            _ => None,
        };
        if let Some(op) = op {
            self.next()?;
            return Ok(Expr::Unary(op, Box::new(self.unary()?)));
        }
        match t.text.as_str() {
            "++" | "--" => {
                self.next()?;
                let target = self.unary()?;
                return Ok(Expr::IncDec {
                    target: Box::new(target),
                    delta: if t.is("++") { 1 } else { -1 },
                    prefix: true,
                });
            }
            "*" => {
                self.next()?;
                return Ok(Expr::Deref(Box::new(self.unary()?)));
            }
            "&" => {
                self.next()?;
                return Ok(Expr::AddrOf(Box::new(self.unary()?)));
            }
            "sizeof" | "_Alignof" | "__alignof__" => {
                self.next()?;
                if self.at("(") {
                    self.skip_group()?;
                } else {
                    self.unary()?;
                }
                return Ok(Expr::Int(8));
            }
            "(" => {
                if let Some(n) = self.peek_at(1) {
                    if self.is_type_start(n) {
                        self.next()?;
                        let mut to_bool = false;
                        let mut pointer = false;
                        while !self.at(")") {
                            let x = self.next()?;
                            to_bool |= x.is("bool") || x.is("_Bool");
                            pointer |= x.is("*");
                        }
                        self.expect(")")?;
                        if self.at("{") {
                            return self.err_here("compound literals are not supported");
                        }
                        let e = self.unary()?;
                        return Ok(Expr::Cast {
                            to_bool: to_bool && !pointer,
                            expr: Box::new(e),
                        });
                    }
                }
            }
            _ => {}
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat("(") {
                let mut args = Vec::new();
                if !self.eat(")") {
                    loop {
                        args.push(self.assignment()?);
                        if self.eat(")") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                e = Expr::Call(Box::new(e), args);
            } else if self.eat("[") {
                let i = self.expr()?;
                self.expect("]")?;
                e = Expr::Index(Box::new(e), Box::new(i));
            } else if self.eat(".") {
                e = Expr::Member(Box::new(e), self.ident()?);
            } else if self.eat("->") {
                e = Expr::Arrow(Box::new(e), self.ident()?);
            } else if self.at("++") || self.at("--") {
                let d = if self.eat("++") {
                    1
                } else {
                    self.next()?;
                    -1
                };
                e = Expr::IncDec {
                    target: Box::new(e),
                    delta: d,
                    prefix: false,
                };
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let t = self.next()?;
        match t.kind {
            TokenKind::Number => parse_int(&t.text).map(Expr::Int).ok_or(ParseError {
                line: t.line,
                message: format!("unsupported number literal {}", t.text),
            }),
            TokenKind::Char => parse_char(&t.text).map(Expr::Int).ok_or(ParseError {
                line: t.line,
                message: format!("unsupported character literal {}", t.text),
            }),
            TokenKind::Str => {
                // Adjacent literals concatenate.
                while self.peek().is_some_and(|n| n.kind == TokenKind::Str) {
                    self.next()?;
                }
                self.strings += 1;
                Ok(Expr::Str(self.strings))
            }
            TokenKind::Ident if !clex::is_keyword(&t.text) => Ok(Expr::Var(t.text.clone())),
            _ if t.is("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(ParseError {
                line: t.line,
                message: format!("unexpected '{}'", t.text),
            }),
        }
    }
}

fn parse_int(text: &str) -> Option<i64> {
    let t = text.trim_end_matches(['u', 'U', 'l', 'L']);
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok().map(|v| v as i64)
    } else if t.len() > 1 && t.starts_with('0') {
        i64::from_str_radix(&t[1..], 8).ok()
    } else {
        t.parse().ok()
    }
}

fn parse_char(text: &str) -> Option<i64> {
    let inner = text.strip_prefix('\'')?.strip_suffix('\'')?;
    let mut cs = inner.chars();
    match (cs.next()?, cs.next()) {
        ('\\', Some(c)) => Some(match c {
            'n' => 10,
            't' => 9,
            'r' => 13,
            '0' => 0,
            'a' => 7,
            'b' => 8,
            'f' => 12,
            'v' => 11,
            c => c as i64,
        }),
        (c, None) => Some(c as i64),
        _ => None,
    }
}

/// Evaluate integer constant expressions such as case labels.
pub fn const_eval(e: &Expr) -> Option<i64> {
    Some(match e {
        Expr::Int(v) => *v,
        Expr::Unary(UnOp::Neg, x) => const_eval(x)?.wrapping_neg(),
        Expr::Unary(UnOp::Plus, x) => const_eval(x)?,
        Expr::Unary(UnOp::BitNot, x) => !const_eval(x)?,
        Expr::Unary(UnOp::Not, x) => (const_eval(x)? == 0) as i64,
        Expr::Binary(op, a, b) => super::exec::binop(*op, const_eval(a)?, const_eval(b)?)?,
        Expr::Cast { to_bool, expr } => {
            let v = const_eval(expr)?;
            if *to_bool {
                (v != 0) as i64
            } else {
                v
            }
        }
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_functions_and_globals() {
        let src = "typedef int T;\nstatic int g = 1, h;\nstruct ops o = { .p = 0, 5 };\n\
                   int f(T a, int b)\n{\n    T x = a + b * 2;\n    if (x > 3) return x; else { x--; }\nl1:\n    goto l1;\n}\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.globals.len(), 3);
        assert_eq!(p.globals[2].decl.init, Some(Init::List(vec![("p".into(), Init::Expr(Expr::Int(0))), ("1".into(), Init::Expr(Expr::Int(5)))])));
        let f = &p.functions["f"];
        assert_eq!(f.params, vec!["a", "b"]);
        assert_eq!(f.body.len(), 3);
        assert!(matches!(f.body[0].kind, StmtKind::Decl(_)));
        assert_eq!(f.body[1].text, "if (x > 3)");
        assert!(matches!(&f.body[2].kind, StmtKind::Label(l, _) if l == "l1"));
        assert_eq!(p.code_lines, vec![4, 6, 7, 9, 10]);
    }

    #[test]
    fn precedence_and_casts() {
        let p = parse_program("int f(void) { return (bool)1 + 2 * 3 == 7 && !0; }").unwrap();
        let StmtKind::Return(Some(e)) = &p.functions["f"].body[0].kind else {
            panic!()
        };
        assert!(matches!(e, Expr::Binary(BinOp::And, _, _)));
        assert_eq!(parse_int("0x10UL"), Some(16));
        assert_eq!(parse_char("'\\n'"), Some(10));
    }

    #[test]
    fn errors_have_lines() {
        let e = parse_program("int f(void)\n{\n    return 1 +;\n}\n").unwrap_err();
        assert_eq!(e.line, 3);
    }
}
