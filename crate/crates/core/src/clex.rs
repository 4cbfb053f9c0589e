//! A small C tokenizer.
//!
//! Comments, string and character literals are recognized so that braces or
//! parentheses inside them never confuse the structural scanners built on top
//! of this module. Preprocessor lines are reported as a single
//! [`TokenKind::Directive`] token and are not expanded.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
    Directive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset of the first character.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
    /// 1-based line of the first character.
    pub line: usize,
}

impl Token {
    pub fn is_ident(&self) -> bool {
        self.kind == TokenKind::Ident
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == p
    }

    pub fn is(&self, text: &str) -> bool {
        self.text == text && self.kind != TokenKind::Str && self.kind != TokenKind::Char
    }
}

/// A comment found while tokenizing, kept for annotation scanning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub end_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for LexError {}

#[derive(Debug, Clone, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub comments: Vec<Comment>,
}

const PUNCT3: &[&str] = &["<<=", ">>=", "...", "->*"];
const PUNCT2: &[&str] = &[
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", "##", "::",
];

pub const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "__inline", "__inline__",
    "__attribute__", "__extension__", "__restrict", "__const", "typeof", "__typeof__",
    "_Alignof", "__alignof__", "asm", "__asm__", "_Static_assert",
];

/// Words that start a type in a declaration.
pub const TYPE_WORDS: &[&str] = &[
    "char", "const", "double", "enum", "extern", "float", "int", "long", "register", "short",
    "signed", "static", "struct", "union", "unsigned", "void", "volatile", "_Bool", "bool",
    "inline", "__inline", "__inline__", "auto", "restrict", "__restrict", "size_t", "ssize_t",
    "gfp_t", "uint8_t", "uint16_t", "uint32_t", "uint64_t", "int8_t", "int16_t", "int32_t",
    "int64_t", "u8", "u16", "u32", "u64", "s8", "s16", "s32", "s64", "loff_t", "uintptr_t",
    "intptr_t", "ptrdiff_t", "__u8", "__u16", "__u32", "__u64", "typeof", "__typeof__",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

pub fn is_type_word(word: &str) -> bool {
    TYPE_WORDS.contains(&word)
}

pub fn is_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

/// Tokenize C text. Fails only on unterminated comments or literals.
pub fn lex(src: &str) -> Result<Lexed, LexError> {
    let bytes = src.as_bytes();
    let mut out = Lexed::default();
    let mut i = 0;
    let mut line = 1;
    // True while only whitespace has been seen since the last newline.
    let mut at_line_start = true;

    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => {
                line += 1;
                i += 1;
                at_line_start = true;
            }
            b' ' | b'\t' | b'\r' | 0x0c | 0x0b => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                let start = i;
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                out.comments.push(Comment {
                    text: src[start + 2..i].to_string(),
                    start,
                    end: i,
                    line,
                    end_line: line,
                });
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let start = i;
                let start_line = line;
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(LexError {
                            line: start_line,
                            message: "unterminated comment".into(),
                        });
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    if bytes[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
                out.comments.push(Comment {
                    text: src[start + 2..i - 2].to_string(),
                    start,
                    end: i,
                    line: start_line,
                    end_line: line,
                });
            }
            b'#' if at_line_start => {
                let start = i;
                let start_line = line;
                // A directive runs to the end of the line, honoring backslash continuations.
                while i < bytes.len() && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                        line += 1;
                        i += 2;
                        continue;
                    }
                    i += 1;
                }
                out.tokens.push(Token {
                    kind: TokenKind::Directive,
                    text: src[start..i].to_string(),
                    start,
                    end: i,
                    line: start_line,
                });
            }
            b'"' | b'\'' => {
                let start = i;
                let quote = c;
                i += 1;
                loop {
                    match bytes.get(i) {
                        None | Some(b'\n') => {
                            return Err(LexError {
                                line,
                                message: "unterminated literal".into(),
                            })
                        }
                        Some(b'\\') => i += 2,
                        Some(&b) if b == quote => {
                            i += 1;
                            break;
                        }
                        Some(_) => i += 1,
                    }
                }
                out.tokens.push(Token {
                    kind: if quote == b'"' { TokenKind::Str } else { TokenKind::Char },
                    text: src[start..i].to_string(),
                    start,
                    end: i,
                    line,
                });
                at_line_start = false;
            }
            c if c == b'_' || c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && (bytes[i] == b'_' || bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                out.tokens.push(Token {
                    kind: TokenKind::Ident,
                    text: src[start..i].to_string(),
                    start,
                    end: i,
                    line,
                });
                at_line_start = false;
            }
            c if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric()
                        || bytes[i] == b'.'
                        || bytes[i] == b'_'
                        || ((bytes[i] == b'+' || bytes[i] == b'-')
                            && matches!(bytes[i - 1], b'e' | b'E' | b'p' | b'P')
                            && !src[start..i].starts_with("0x")))
                {
                    i += 1;
                }
                out.tokens.push(Token {
                    kind: TokenKind::Number,
                    text: src[start..i].to_string(),
                    start,
                    end: i,
                    line,
                });
                at_line_start = false;
            }
            _ => {
                let start = i;
                let rest = &src[i..];
                let len = PUNCT3
                    .iter()
                    .find(|p| rest.starts_with(**p))
                    .map(|p| p.len())
                    .or_else(|| PUNCT2.iter().find(|p| rest.starts_with(**p)).map(|p| p.len()))
                    .unwrap_or_else(|| rest.chars().next().map_or(1, char::len_utf8));
                i += len;
                out.tokens.push(Token {
                    kind: TokenKind::Punct,
                    text: src[start..i].to_string(),
                    start,
                    end: i,
                    line,
                });
                at_line_start = false;
            }
        }
    }
    Ok(out)
}

/// Index of the token closing the bracket opened at `open`.
pub fn matching_close(tokens: &[Token], open: usize) -> Option<usize> {
    let (o, c) = match tokens.get(open)?.text.as_str() {
        "(" => ("(", ")"),
        "{" => ("{", "}"),
        "[" => ("[", "]"),
        _ => return None,
    };
    let mut depth = 0usize;
    for (idx, tok) in tokens.iter().enumerate().skip(open) {
        if tok.kind != TokenKind::Punct {
            continue;
        }
        if tok.text == o {
            depth += 1;
        } else if tok.text == c {
            depth -= 1;
            if depth == 0 {
                return Some(idx);
            }
        }
    }
    None
}

/// Join token texts with single spaces, gluing brackets and separators.
pub fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (idx, tok) in tokens.iter().enumerate() {
        if idx > 0 {
            let prev = &tokens[idx - 1];
            let call_paren = tok.text == "(" && prev.is_ident() && !is_keyword(&prev.text);
            let glue = matches!(tok.text.as_str(), ")" | "]" | "," | ";" | "[")
                || matches!(prev.text.as_str(), "(" | "[")
                || call_paren
                || tok.text == "*" && prev.text == "*";
            if !glue {
                out.push(' ');
            }
        }
        out.push_str(&tok.text);
    }
    out
}

/// Collapse runs of whitespace into single spaces and trim.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1-based line number of a byte offset.
pub fn line_of(src: &str, offset: usize) -> usize {
    src.as_bytes()[..offset.min(src.len())].iter().filter(|b| **b == b'\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        lex(src).unwrap().tokens.into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn skips_comments_and_keeps_literals_whole() {
        let toks = texts("a /* { */ b // }\n\"}\" '{' c");
        assert_eq!(toks, vec!["a", "b", "\"}\"", "'{'", "c"]);
    }

    #[test]
    fn directives_are_single_tokens() {
        let l = lex("#include <x.h>\n#define A(x) \\\n  x\nint a;").unwrap();
        assert_eq!(l.tokens[0].kind, TokenKind::Directive);
        assert_eq!(l.tokens[1].kind, TokenKind::Directive);
        assert_eq!(l.tokens[2].text, "int");
        assert_eq!(l.tokens[2].line, 4);
    }

    #[test]
    fn multi_char_punctuators() {
        assert_eq!(texts("a->b++ <<= c"), vec!["a", "->", "b", "++", "<<=", "c"]);
    }

    #[test]
    fn unterminated_comment_is_an_error() {
        assert_eq!(lex("int a; /* oops").unwrap_err().line, 1);
    }

    #[test]
    fn matching_close_skips_nested() {
        let l = lex("f(a, (b), c) {}").unwrap();
        assert_eq!(matching_close(&l.tokens, 1), Some(9));
    }

    #[test]
    fn comment_lines_are_tracked() {
        let l = lex("x;\n/* NOTE a\n b */\ny;").unwrap();
        assert_eq!(l.comments[0].line, 2);
        assert_eq!(l.comments[0].end_line, 3);
        assert_eq!(l.tokens[2].line, 4);
    }
}
