//! Top-level structure of a C translation unit.
//!
//! [`scan_items`] splits tokenized C text into file-scope items (function
//! definitions, declarations, type definitions and directives) without
//! parsing expressions. Everything that inspects C structurally builds on it.

use crate::clex::{self, matching_close, Lexed, Token, TokenKind};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemKind {
    Function,
    /// A function declaration without a body.
    Prototype,
    /// Variable declarations, possibly with initializers.
    Variable,
    /// `typedef`, or a struct/union/enum definition without declarators.
    Type,
    Directive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub ty: String,
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub kind: ItemKind,
    /// Token index range `[first, last]` inclusive.
    pub first: usize,
    pub last: usize,
    /// Byte range covering the item text.
    pub start: usize,
    pub end: usize,
    pub line: usize,
    /// Function, prototype or typedef name; first declarator for variables.
    pub name: Option<String>,
    /// All declarator names of a variable declaration.
    pub names: Vec<String>,
    pub is_static: bool,
    /// For functions and prototypes: token index of the parameter list `(`.
    pub params_open: Option<usize>,
    /// For functions: token indices of the body braces.
    pub body: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ScanError {}

const STORAGE: &[&str] = &[
    "static", "extern", "inline", "__inline", "__inline__", "register", "auto", "__extension__",
];

/// Split a tokenized unit into file-scope items.
pub fn scan_items(lexed: &Lexed) -> Result<Vec<Item>, ScanError> {
    let toks = &lexed.tokens;
    let mut items = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let tok = &toks[i];
        if tok.kind == TokenKind::Directive {
            items.push(Item {
                kind: ItemKind::Directive,
                first: i,
                last: i,
                start: tok.start,
                end: tok.end,
                line: tok.line,
                name: None,
                names: Vec::new(),
                is_static: false,
                params_open: None,
                body: None,
            });
            i += 1;
            continue;
        }
        if tok.is_punct(";") {
            // Stray semicolon at file scope.
            i += 1;
            continue;
        }
        if tok.is_punct("}") || tok.is_punct(")") || tok.is_punct("]") {
            return Err(ScanError {
                line: tok.line,
                message: format!("unbalanced '{}'", tok.text),
            });
        }
        let first = i;
        let mut j = i;
        let mut saw_assign = false;
        let item = loop {
            let Some(t) = toks.get(j) else {
                return Err(ScanError {
                    line: toks[first].line,
                    message: "unterminated declaration at end of file".into(),
                });
            };
            if t.kind == TokenKind::Directive {
                return Err(ScanError {
                    line: t.line,
                    message: "directive inside a declaration".into(),
                });
            }
            if t.is_punct("}") || t.is_punct(")") || t.is_punct("]") {
                return Err(ScanError {
                    line: t.line,
                    message: format!("unbalanced '{}'", t.text),
                });
            }
            if t.is_punct("=") {
                saw_assign = true;
            }
            if t.is_punct("(") || t.is_punct("[") {
                j = close_or_err(toks, j)? + 1;
                continue;
            }
            if t.is_punct("{") {
                let close = close_or_err(toks, j)?;
                if !saw_assign && is_function_head(toks, first, j) {
                    break function_item(toks, first, j, close);
                }
                j = close + 1;
                continue;
            }
            if t.is_punct(";") {
                break declaration_item(toks, first, j);
            }
            j += 1;
        };
        i = item.last + 1;
        items.push(item);
    }
    Ok(items)
}

fn close_or_err(toks: &[Token], open: usize) -> Result<usize, ScanError> {
    matching_close(toks, open).ok_or_else(|| ScanError {
        line: toks[open].line,
        message: format!("unbalanced '{}'", toks[open].text),
    })
}

/// The tokens `[first, brace)` look like `... name ( params ) [attributes]`.
fn is_function_head(toks: &[Token], first: usize, brace: usize) -> bool {
    if toks[first].is("struct") || toks[first].is("union") || toks[first].is("enum") {
        // `struct s {` defines a type; `struct s *f(void) {` is still a function.
        if toks.get(first + 2).is_some_and(|t| t.is_punct("{")) || toks[first + 1].is_punct("{") {
            return false;
        }
    }
    if toks[first].is("typedef") {
        return false;
    }
    params_open_of(toks, first, brace).is_some()
}

/// Locate the `(` of the parameter list of a declarator ending before `end`.
fn params_open_of(toks: &[Token], first: usize, end: usize) -> Option<usize> {
    let mut k = end;
    // Skip trailing attribute groups such as `__attribute__((noreturn))`.
    loop {
        if k == first {
            return None;
        }
        let prev = &toks[k - 1];
        if prev.is_punct(")") {
            let open = find_open(toks, first, k - 1)?;
            if open > first && toks[open - 1].is("__attribute__") {
                k = open - 1;
                continue;
            }
            if open > first && toks[open - 1].is_ident() && !clex::is_keyword(&toks[open - 1].text) {
                return Some(open);
            }
            // `(*name)(params)` style declarators are not function definitions we track.
            return None;
        }
        return None;
    }
}

fn find_open(toks: &[Token], first: usize, close: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut k = close + 1;
    while k > first {
        k -= 1;
        let t = &toks[k];
        if t.is_punct(")") {
            depth += 1;
        } else if t.is_punct("(") {
            depth -= 1;
            if depth == 0 {
                return Some(k);
            }
        }
    }
    None
}

fn has_storage(toks: &[Token], first: usize, end: usize, word: &str) -> bool {
    toks[first..end].iter().any(|t| t.is(word))
}

fn function_item(toks: &[Token], first: usize, brace: usize, close: usize) -> Item {
    let open = params_open_of(toks, first, brace).expect("checked by is_function_head");
    Item {
        kind: ItemKind::Function,
        first,
        last: close,
        start: toks[first].start,
        end: toks[close].end,
        line: toks[first].line,
        name: Some(toks[open - 1].text.clone()),
        names: vec![toks[open - 1].text.clone()],
        is_static: has_storage(toks, first, open, "static"),
        params_open: Some(open),
        body: Some((brace, close)),
    }
}

fn declaration_item(toks: &[Token], first: usize, semi: usize) -> Item {
    let base = Item {
        kind: ItemKind::Variable,
        first,
        last: semi,
        start: toks[first].start,
        end: toks[semi].end,
        line: toks[first].line,
        name: None,
        names: Vec::new(),
        is_static: has_storage(toks, first, semi, "static"),
        params_open: None,
        body: None,
    };
    if toks[first].is("typedef") {
        let name = declarator_names(toks, first, semi).pop();
        return Item {
            kind: ItemKind::Type,
            name: name.clone(),
            names: name.into_iter().collect(),
            ..base
        };
    }
    // A prototype: the first depth-0 `ident (` not preceded by `=`.
    let mut k = first;
    while k < semi {
        let t = &toks[k];
        if t.is_punct("=") {
            break;
        }
        if t.is_punct("(") {
            if k > first && toks[k - 1].is_ident() && !clex::is_keyword(&toks[k - 1].text) {
                let name = toks[k - 1].text.clone();
                return Item {
                    kind: ItemKind::Prototype,
                    name: Some(name.clone()),
                    names: vec![name],
                    params_open: Some(k),
                    ..base
                };
            }
            k = matching_close(toks, k).unwrap_or(semi);
        } else if t.is_punct("{") || t.is_punct("[") {
            k = matching_close(toks, k).unwrap_or(semi);
        }
        k += 1;
    }
    let names = declarator_names(toks, first, semi);
    if names.is_empty() {
        return Item {
            kind: ItemKind::Type,
            ..base
        };
    }
    Item {
        kind: ItemKind::Variable,
        name: names.first().cloned(),
        names,
        ..base
    }
}

/// Names introduced by the declarators of `toks[first..end]`.
pub fn declarator_names(toks: &[Token], first: usize, end: usize) -> Vec<String> {
    let mut names = Vec::new();
    let mut k = first;
    let mut last_ident: Option<usize> = None;
    let mut in_init = false;
    while k < end {
        let t = &toks[k];
        if t.is_punct("{") || t.is_punct("[") {
            if let (Some(li), true) = (last_ident, t.is_punct("[")) {
                if !in_init {
                    push_name(&mut names, toks, li);
                    last_ident = None;
                }
            }
            k = matching_close(toks, k).unwrap_or(end);
        } else if t.is_punct("(") {
            // `(*name)` introduces a function pointer declarator.
            if !in_init && toks.get(k + 1).is_some_and(|n| n.is_punct("*")) {
                if let Some(n) = toks.get(k + 2).filter(|n| n.is_ident()) {
                    names.push(n.text.clone());
                }
            }
            k = matching_close(toks, k).unwrap_or(end);
            last_ident = None;
        } else if t.is_punct("=") {
            if let Some(li) = last_ident.take() {
                push_name(&mut names, toks, li);
            }
            in_init = true;
        } else if t.is_punct(",") {
            if let (Some(li), false) = (last_ident.take(), in_init) {
                push_name(&mut names, toks, li);
            }
            in_init = false;
        } else if t.is_ident() && !in_init && !clex::is_keyword(&t.text) {
            last_ident = Some(k);
        }
        k += 1;
    }
    if let (Some(li), false) = (last_ident, in_init) {
        push_name(&mut names, toks, li);
    }
    names
}

fn push_name(names: &mut Vec<String>, toks: &[Token], idx: usize) {
    // `struct tag;` declares no variable.
    if idx > 0 && (toks[idx - 1].is("struct") || toks[idx - 1].is("union") || toks[idx - 1].is("enum")) {
        return;
    }
    let name = toks[idx].text.clone();
    if !names.contains(&name) {
        names.push(name);
    }
}

/// Parameters of the list opened at `open`.
pub fn parse_params(toks: &[Token], open: usize) -> Vec<Param> {
    let Some(close) = matching_close(toks, open) else {
        return Vec::new();
    };
    let mut params = Vec::new();
    let mut start = open + 1;
    let mut k = open + 1;
    while k <= close {
        let t = &toks[k];
        if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
            k = matching_close(toks, k).unwrap_or(close);
        } else if t.is_punct(",") || k == close {
            if k > start {
                params.push(split_param(&toks[start..k]));
            }
            start = k + 1;
        }
        k += 1;
    }
    if params.len() == 1 && params[0].name.is_none() && params[0].ty == "void" {
        params.clear();
    }
    params
}

fn split_param(toks: &[Token]) -> Param {
    // Function pointer parameter: `ret (*name)(args)`.
    if let Some(p) = toks.iter().position(|t| t.is_punct("(")) {
        if toks.get(p + 1).is_some_and(|t| t.is_punct("*")) {
            if let Some(n) = toks.get(p + 2).filter(|t| t.is_ident()) {
                let ty: Vec<Token> = toks.iter().filter(|t| t.start != n.start).cloned().collect();
                return Param {
                    ty: clex::join_tokens(&ty),
                    name: Some(n.text.clone()),
                };
            }
        }
    }
    let arr = toks.iter().position(|t| t.is_punct("[")).unwrap_or(toks.len());
    let head = &toks[..arr];
    if head.is_empty() || toks.len() == 1 && toks[0].is_punct("...") {
        return Param {
            ty: clex::join_tokens(toks),
            name: None,
        };
    }
    let last = &head[head.len() - 1];
    let named = head.len() >= 2
        && last.is_ident()
        && !clex::is_type_word(&last.text)
        && !clex::is_keyword(&last.text)
        && !matches!(head[head.len() - 2].text.as_str(), "struct" | "union" | "enum");
    if named {
        let mut ty: Vec<Token> = head[..head.len() - 1].to_vec();
        if arr < toks.len() {
            // Arrays decay to pointers.
            ty.push(Token {
                kind: TokenKind::Punct,
                text: "*".into(),
                start: 0,
                end: 0,
                line: 0,
            });
        }
        Param {
            ty: clex::join_tokens(&ty),
            name: Some(last.text.clone()),
        }
    } else {
        Param {
            ty: clex::join_tokens(toks),
            name: None,
        }
    }
}

/// Return type text of a function or prototype item, storage classes removed.
pub fn return_type(toks: &[Token], item: &Item) -> String {
    let Some(open) = item.params_open else {
        return String::new();
    };
    let ty: Vec<Token> = toks[item.first..open - 1]
        .iter()
        .filter(|t| !STORAGE.contains(&t.text.as_str()))
        .cloned()
        .collect();
    clex::join_tokens(&ty)
}

/// A parsed function declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prototype {
    pub name: String,
    /// Return type with storage classes removed.
    pub return_type: String,
    pub params: Vec<Param>,
    pub is_static: bool,
    pub is_variadic: bool,
}

impl Prototype {
    pub fn returns_void(&self) -> bool {
        self.return_type == "void"
    }

    /// Parameter names, inventing `<prefix><index>` for unnamed ones.
    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| p.name.clone().unwrap_or_else(|| format!("{prefix}{i}")))
            .collect()
    }
}

/// Parse a single function declaration such as `static int f(char *s, int n)`.
pub fn parse_prototype(text: &str) -> Result<Prototype, String> {
    let src = format!("{};", text.trim().trim_end_matches(';'));
    let lexed = clex::lex(&src).map_err(|e| e.to_string())?;
    let items = scan_items(&lexed).map_err(|e| e.to_string())?;
    let [item] = items.as_slice() else {
        return Err(format!("expected one function declaration in {text:?}"));
    };
    let (Some(open), Some(name)) = (item.params_open, item.name.clone()) else {
        return Err(format!("{text:?} does not declare a function"));
    };
    let toks = &lexed.tokens;
    let mut params = parse_params(toks, open);
    let is_variadic = params.last().is_some_and(|p| p.ty == "...");
    if is_variadic {
        params.pop();
    }
    Ok(Prototype {
        name,
        return_type: return_type(toks, item),
        params,
        is_static: item.is_static,
        is_variadic,
    })
}
