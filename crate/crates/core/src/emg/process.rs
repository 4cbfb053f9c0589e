//! Process expressions: the action ordering notation of scenario models.
//!
//! ```text
//! expr   := term ('|' term)*
//! term   := factor ('.' factor)*
//! factor := '<' id '>' | '(' '!'? id ')' | '[' id ']' | '{' id '}' | '(' expr ')'
//! ```

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ProcessExpr {
    Block(String),
    /// `(name)`, or `(!name)` when `replicative` is set.
    Receive { name: String, replicative: bool },
    Send(String),
    Jump(String),
    Seq(Vec<ProcessExpr>),
    Choice(Vec<ProcessExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column, self.message)
    }
}

impl std::error::Error for SyntaxError {}

impl ProcessExpr {
    /// Leaf action names in first-occurrence order.
    pub fn leaves(&self) -> Vec<&ProcessExpr> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a ProcessExpr>) {
        match self {
            ProcessExpr::Seq(xs) | ProcessExpr::Choice(xs) => xs.iter().for_each(|x| x.collect_leaves(out)),
            leaf => out.push(leaf),
        }
    }

    pub fn leaf_name(&self) -> Option<&str> {
        match self {
            ProcessExpr::Block(n) | ProcessExpr::Send(n) | ProcessExpr::Jump(n) => Some(n),
            ProcessExpr::Receive { name, .. } => Some(name),
            _ => None,
        }
    }
}

impl fmt::Display for ProcessExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_process(self))
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

fn is_id_char(c: char) -> bool {
    c == '_' || c.is_ascii_alphanumeric()
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            column: self.pos + 1,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expect(&mut self, c: char) -> Result<(), SyntaxError> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => self.err(format!("expected '{c}', found '{x}'")),
            None => self.err(format!("expected '{c}', found end of input")),
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && is_id_char(self.chars[self.pos]) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected an action name");
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn expr(&mut self) -> Result<ProcessExpr, SyntaxError> {
        let mut terms = vec![self.term()?];
        while self.peek() == Some('|') {
            self.pos += 1;
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { ProcessExpr::Choice(terms) })
    }

    fn term(&mut self) -> Result<ProcessExpr, SyntaxError> {
        let mut factors = vec![self.factor()?];
        while self.peek() == Some('.') {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { ProcessExpr::Seq(factors) })
    }

    /// After an opening parenthesis: is this `!? id )`?
    fn receive_ahead(&self) -> bool {
        let mut i = self.pos;
        let skip = |i: &mut usize| {
            while *i < self.chars.len() && self.chars[*i].is_whitespace() {
                *i += 1;
            }
        };
        skip(&mut i);
        if self.chars.get(i) == Some(&'!') {
            i += 1;
            skip(&mut i);
        }
        let start = i;
        while i < self.chars.len() && is_id_char(self.chars[i]) {
            i += 1;
        }
        if i == start {
            return false;
        }
        skip(&mut i);
        self.chars.get(i) == Some(&')')
    }

    fn factor(&mut self) -> Result<ProcessExpr, SyntaxError> {
        let Some(c) = self.peek() else {
            return self.err("unexpected end of input");
        };
        let close = match c {
            '<' => '>',
            '[' => ']',
            '{' => '}',
            '(' => ')',
            _ => return self.err(format!("unexpected '{c}'")),
        };
        self.pos += 1;
        let node = match c {
            '<' => ProcessExpr::Block(self.ident()?),
            '[' => ProcessExpr::Send(self.ident()?),
            '{' => ProcessExpr::Jump(self.ident()?),
            _ if self.receive_ahead() => {
                let replicative = self.peek() == Some('!');
                if replicative {
                    self.pos += 1;
                }
                ProcessExpr::Receive {
                    name: self.ident()?,
                    replicative,
                }
            }
            _ => {
                if self.peek() == Some(')') {
                    return self.err("empty group");
                }
                self.expr()?
            }
        };
        self.expect(close)?;
        Ok(node)
    }
}

pub fn parse_process(text: &str) -> Result<ProcessExpr, SyntaxError> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    if p.peek().is_none() {
        return p.err("empty process");
    }
    let e = p.expr()?;
    if let Some(c) = p.peek() {
        return p.err(format!("unexpected '{c}'"));
    }
    Ok(e)
}

/// Canonical text with the minimal parentheses needed to re-parse to `expr`.
pub fn print_process(expr: &ProcessExpr) -> String {
    match expr {
        ProcessExpr::Block(n) => format!("<{n}>"),
        ProcessExpr::Receive { name, replicative } => {
            format!("({}{name})", if *replicative { "!" } else { "" })
        }
        ProcessExpr::Send(n) => format!("[{n}]"),
        ProcessExpr::Jump(n) => format!("{{{n}}}"),
        ProcessExpr::Seq(xs) => xs
            .iter()
            .map(|x| match x {
                ProcessExpr::Seq(_) | ProcessExpr::Choice(_) => format!("({})", print_process(x)),
                _ => print_process(x),
            })
            .collect::<Vec<_>>()
            .join("."),
        ProcessExpr::Choice(xs) => xs
            .iter()
            .map(|x| match x {
                ProcessExpr::Choice(_) => format!("({})", print_process(x)),
                _ => print_process(x),
            })
            .collect::<Vec<_>>()
            .join(" | "),
    }
}
