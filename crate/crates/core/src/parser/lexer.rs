use super::{ParseError, Pos};
use crate::word::Word;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    /// Lowercase-initial identifier.
    Ident(String),
    /// Uppercase-initial identifier.
    OVar(String),
    Kw(&'static str),
    /// Quoted word literal.
    Word(Word),
    /// `uN` or a bare decimal, both denoting `1^N`.
    Unary(usize),
    Sym(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(x) | Tok::OVar(x) => format!("identifier `{x}`"),
            Tok::Kw(k) => format!("`{k}`"),
            Tok::Word(w) => format!("literal \"{w}\""),
            Tok::Unary(n) => format!("number {n}"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "prog", "return", "skip", "if", "else", "while", "break", "for", "to", "declass", "box", "in", "declare", "call",
    "lambda", "var", "true", "false", "eps", "and", "or",
];

// Longest first so that `:=` wins over `:` and `<=` over `<`.
const SYMBOLS: &[(&str, &str)] = &[
    (":=", ":="),
    ("<=", "<="),
    (">=", ">="),
    ("!=", "!="),
    ("≤", "<="),
    ("≥", ">="),
    ("≠", "!="),
    ("−", "-"),
    ("ε", "eps"),
    ("(", "("),
    (")", ")"),
    ("{", "{"),
    ("}", "}"),
    ("[", "["),
    ("]", "]"),
    (",", ","),
    (";", ";"),
    (".", "."),
    ("|", "|"),
    ("+", "+"),
    ("-", "-"),
    ("=", "="),
    ("<", "<"),
    (">", ">"),
    ("/", "/"),
];

pub fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            continue;
        }
        let pos = Pos { line, col };
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if let Some(k) = KEYWORDS.iter().find(|k| **k == text) {
                Tok::Kw(k)
            } else if let Some(n) = text.strip_prefix('u').filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())) {
                Tok::Unary(n.parse().map_err(|_| ParseError::at(pos, "unary literal too large", vec![]))?)
            } else if c.is_ascii_uppercase() {
                Tok::OVar(text)
            } else {
                Tok::Ident(text)
            };
            out.push((tok, pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            let text: String = chars[start..i].iter().collect();
            let n = text.parse().map_err(|_| ParseError::at(pos, "number too large", vec![]))?;
            out.push((Tok::Unary(n), pos));
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let start = i;
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\n' {
                    return Err(ParseError::at(pos, "unterminated word literal", vec!["\"".into()]));
                }
                { let ch = chars[i]; advance(&mut i, &mut line, &mut col, ch); }
            }
            if i == chars.len() {
                return Err(ParseError::at(pos, "unterminated word literal", vec!["\"".into()]));
            }
            let text: String = chars[start..i].iter().collect();
            advance(&mut i, &mut line, &mut col, '"');
            let w = text.parse().map_err(|e| ParseError::at(pos, &format!("bad word literal: {e}"), vec![]))?;
            out.push((Tok::Word(w), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let Some((lit, sym)) = SYMBOLS.iter().find(|(lit, _)| rest.starts_with(lit)) else {
            return Err(ParseError::at(pos, &format!("unexpected character {c:?}"), vec![]));
        };
        for ch in lit.chars() {
            advance(&mut i, &mut line, &mut col, ch);
        }
        out.push((if *sym == "eps" { Tok::Kw("eps") } else { Tok::Sym(sym) }, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}
