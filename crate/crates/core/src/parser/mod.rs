//! Concrete syntax: lexer, recursive-descent parser, `for` desugaring and pretty printer.

mod desugar;
mod lexer;
mod pretty;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use desugar::{desugar_for, DesugarError};
pub use pretty::{pretty_print, pretty_print1, pretty_print2, pretty_expr, pretty_stmt};

use crate::ast::{
    assign_loop_ids, Closure, Expr, LoopId, Procedure, Program, Program1, Program2, Stmt, Term, While,
};
use crate::opreg::builtins;
use crate::word::Word;
use lexer::{lex, Tok};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}{}", expected_suffix(.expected))]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
    pub expected: Vec<String>,
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected one of: {})", expected.join(", "))
    }
}

impl ParseError {
    pub fn at(pos: Pos, message: &str, expected: Vec<String>) -> ParseError {
        ParseError { line: pos.line, col: pos.col, message: message.into(), expected }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Desugar(#[from] DesugarError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceProgram {
    pub text: String,
    pub origin: String,
}

impl SourceProgram {
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> SourceProgram {
        SourceProgram { text: text.into(), origin: origin.into() }
    }
}

/// Source positions of loops, keyed by loop id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceMap {
    pub loops: BTreeMap<LoopId, Pos>,
}

impl SourceMap {
    pub fn line_of(&self, id: LoopId) -> Option<usize> {
        self.loops.get(&id).map(|p| p.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub program: Program,
    pub source_map: SourceMap,
}

/// Parses and desugars a program.
pub fn parse(src: &SourceProgram) -> Result<Program, SyntaxError> {
    parse_with_map(&src.text, false).map(|p| p.program)
}

pub fn parse_str(text: &str) -> Result<Program, SyntaxError> {
    parse_with_map(text, false).map(|p| p.program)
}

/// Parses a program; with `raw`, `for` loops are kept as written.
pub fn parse_with_map(text: &str, raw: bool) -> Result<Parsed, SyntaxError> {
    let tokens = lex(text)?;
    let mut p = Parser { toks: tokens, i: 0, sites: Vec::new(), second_order: false };
    let mut program = p.program()?;
    let mut sites = p.sites;
    if raw {
        sites.retain(|(_, is_for)| !is_for);
    }
    let mut next = 0;
    let mut renumber = |s: &mut Stmt| -> Result<(), SyntaxError> {
        if !raw {
            *s = desugar_for(s)?;
        }
        next = assign_loop_ids(s, next);
        Ok(())
    };
    match &mut program {
        Program::First(p1) => renumber(&mut p1.body)?,
        Program::Second(p2) => {
            for proc in &mut p2.procedures {
                renumber(&mut proc.body)?;
            }
        }
    }
    let source_map = SourceMap {
        loops: sites.into_iter().enumerate().map(|(i, (pos, _))| (LoopId(i as u32), pos)).collect(),
    };
    Ok(Parsed { program, source_map })
}

pub fn parse_program1(text: &str) -> Result<Program1, SyntaxError> {
    match parse_str(text)? {
        Program::First(p) => Ok(p),
        Program::Second(_) => Err(ParseError::at(Pos { line: 1, col: 1 }, "expected a first-order program", vec!["prog".into()]).into()),
    }
}

pub fn parse_program2(text: &str) -> Result<Program2, SyntaxError> {
    match parse_str(text)? {
        Program::Second(p) => Ok(p),
        Program::First(_) => Err(ParseError::at(Pos { line: 1, col: 1 }, "expected a second-order program", vec!["box".into(), "declare".into(), "call".into()]).into()),
    }
}

const BINOPS: &[(&str, u8)] = &[
    ("or", 1),
    ("and", 2),
    ("=", 3),
    ("!=", 3),
    ("<", 3),
    ("<=", 3),
    (">", 3),
    (">=", 3),
    ("+", 4),
    ("-", 4),
];

pub(crate) fn binop_precedence(op: &str) -> Option<u8> {
    BINOPS.iter().find(|(o, _)| *o == op).map(|(_, p)| *p)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    /// Loop keyword positions in pre-order; the flag marks `for`.
    sites: Vec<(Pos, bool)>,
    second_order: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError::at(
            self.pos(),
            &format!("unexpected {}", self.peek().describe()),
            expected.iter().map(|s| s.to_string()).collect(),
        ))
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(x) if *x == k)
    }

    fn sym(&mut self, s: &str) -> PResult<()> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.error(&[s])
        }
    }

    fn kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.error(&[k])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(x) => {
                self.bump();
                Ok(x)
            }
            _ => self.error(&["identifier"]),
        }
    }

    fn ovar(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::OVar(x) => {
                self.bump();
                Ok(x)
            }
            _ => self.error(&["order-1 variable"]),
        }
    }

    fn proc_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(x) | Tok::OVar(x) => {
                self.bump();
                Ok(x)
            }
            _ => self.error(&["procedure name"]),
        }
    }

    fn idlist(&mut self, close: &str) -> PResult<Vec<String>> {
        let mut out = Vec::new();
        if self.is_sym(close) {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if self.is_sym(",") {
                self.bump();
            } else {
                return Ok(out);
            }
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let prog = if self.is_kw("prog") {
            Program::First(self.program1()?)
        } else {
            self.second_order = true;
            Program::Second(self.program2()?)
        };
        if *self.peek() != Tok::Eof {
            return self.error(&["end of input"]);
        }
        Ok(prog)
    }

    fn program1(&mut self) -> PResult<Program1> {
        self.kw("prog")?;
        self.sym("(")?;
        let params = self.idlist(")")?;
        self.sym(")")?;
        self.sym("{")?;
        let body = self.seq()?;
        self.kw("return")?;
        let ret = self.ident()?;
        self.sym("}")?;
        Ok(Program1 { params, body, ret })
    }

    /// `X`, optionally annotated `X/k`.
    fn ovar_decl(&mut self) -> PResult<(String, Option<usize>)> {
        let x = self.ovar()?;
        if self.is_sym("/") {
            self.bump();
            match self.bump() {
                Tok::Unary(n) => Ok((x, Some(n))),
                _ => {
                    self.i -= 1;
                    self.error(&["arity"])
                }
            }
        } else {
            Ok((x, None))
        }
    }

    /// A parameter list: order-1 variables first, then order-0 ones; a leading comma is allowed.
    fn params(&mut self) -> PResult<(Vec<(String, Option<usize>)>, Vec<String>)> {
        let (mut order1, mut order0) = (Vec::new(), Vec::new());
        if self.is_sym(",") {
            self.bump();
        }
        if self.is_sym(")") {
            return Ok((order1, order0));
        }
        loop {
            match self.peek() {
                Tok::OVar(_) if order0.is_empty() => order1.push(self.ovar_decl()?),
                Tok::Ident(_) => order0.push(self.ident()?),
                _ => return self.error(if order0.is_empty() { &["identifier", "order-1 variable"] } else { &["identifier"] }),
            }
            if self.is_sym(",") {
                self.bump();
            } else {
                return Ok((order1, order0));
            }
        }
    }

    fn program2(&mut self) -> PResult<Program2> {
        let (mut boxed_oracles, mut boxed) = (Vec::new(), Vec::new());
        while self.is_kw("box") {
            self.bump();
            self.sym("[")?;
            if !self.is_sym("]") {
                loop {
                    match self.peek() {
                        Tok::OVar(_) => boxed_oracles.push(self.ovar_decl()?),
                        Tok::Ident(_) => boxed.push(self.ident()?),
                        _ => return self.error(&["identifier", "order-1 variable"]),
                    }
                    if self.is_sym(",") {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.sym("]")?;
            self.kw("in")?;
        }
        let mut procs = Vec::new();
        while self.is_kw("declare") {
            self.bump();
            procs.push(self.procedure()?);
            self.kw("in")?;
        }
        if !matches!(self.peek(), Tok::Ident(_)) && !self.is_kw("call") {
            return self.error(&["box", "declare", "call", "identifier"]);
        }
        let main = self.term()?;

        let procedures: Vec<Procedure> = procs
            .into_iter()
            .map(|(mut proc, annotated)| {
                proc.oracle_params = annotated
                    .into_iter()
                    .map(|(x, a)| {
                        let arity = a.or_else(|| used_arity(&proc.body, &x)).unwrap_or(1);
                        (x, arity)
                    })
                    .collect();
                proc
            })
            .collect();
        let boxed_oracles = boxed_oracles
            .into_iter()
            .map(|(x, a)| {
                let arity = a.or_else(|| passed_arity(&main, &x, &procedures)).unwrap_or(1);
                (x, arity)
            })
            .collect();
        Ok(Program2 { boxed_oracles, boxed, procedures, main })
    }

    fn procedure(&mut self) -> PResult<(Procedure, Vec<(String, Option<usize>)>)> {
        let name = self.proc_name()?;
        self.sym("(")?;
        let (order1, params) = self.params()?;
        self.sym(")")?;
        self.sym("{")?;
        let mut locals = Vec::new();
        while self.is_kw("var") {
            self.bump();
            locals.extend(self.idlist(";")?);
            self.sym(";")?;
        }
        let body = self.seq()?;
        self.kw("return")?;
        let ret = self.ident()?;
        self.sym("}")?;
        Ok((Procedure { name, oracle_params: Vec::new(), params, locals, body, ret }, order1))
    }

    fn term(&mut self) -> PResult<Term> {
        if self.is_kw("call") {
            self.bump();
            let proc = self.proc_name()?;
            self.sym("(")?;
            let (mut closures, mut args) = (Vec::new(), Vec::new());
            if self.is_sym(",") {
                self.bump();
            }
            if !self.is_sym(")") {
                loop {
                    match self.peek().clone() {
                        Tok::OVar(x) if args.is_empty() => {
                            self.bump();
                            closures.push(Closure::OracleVar(x));
                        }
                        Tok::Kw("lambda") if args.is_empty() => {
                            self.bump();
                            self.sym("(")?;
                            let xs = self.idlist(")")?;
                            self.sym(")")?;
                            self.sym(".")?;
                            closures.push(Closure::Lambda(xs, Box::new(self.term()?)));
                        }
                        _ => args.push(self.term()?),
                    }
                    if self.is_sym(",") {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.sym(")")?;
            Ok(Term::Call { proc, closures, args })
        } else {
            match self.peek().clone() {
                Tok::Ident(x) => {
                    self.bump();
                    Ok(Term::Var(x))
                }
                _ => self.error(&["call", "identifier"]),
            }
        }
    }

    /// Statements separated by `;`; a trailing `;` and a missing `;` after a block are tolerated.
    fn seq(&mut self) -> PResult<Stmt> {
        let mut items = vec![self.stmt()?];
        loop {
            let after_block = self.toks[self.i.saturating_sub(1)].0 == Tok::Sym("}");
            if self.is_sym(";") {
                self.bump();
                if self.is_sym("}") || self.is_kw("return") {
                    break;
                }
                items.push(self.stmt()?);
            } else if after_block && !self.is_sym("}") && !self.is_kw("return") && *self.peek() != Tok::Eof {
                items.push(self.stmt()?);
            } else {
                break;
            }
        }
        Ok(Stmt::seq(items))
    }

    fn block(&mut self) -> PResult<Stmt> {
        self.sym("{")?;
        if self.is_sym("}") {
            self.bump();
            return Ok(Stmt::Skip);
        }
        let s = self.seq()?;
        self.sym("}")?;
        Ok(s)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Kw("skip") => {
                self.bump();
                Ok(Stmt::Skip)
            }
            Tok::Ident(x) => {
                self.bump();
                self.sym(":=")?;
                Ok(Stmt::Assign(x, self.expr()?))
            }
            Tok::Kw("if") => {
                self.bump();
                self.sym("(")?;
                let e = self.expr()?;
                self.sym(")")?;
                let then = self.block()?;
                let els = if self.is_kw("else") {
                    self.bump();
                    self.block()?
                } else {
                    Stmt::Skip
                };
                Ok(Stmt::If(e, Box::new(then), Box::new(els)))
            }
            Tok::Kw("while") => {
                self.bump();
                self.sites.push((pos, false));
                self.sym("(")?;
                let guard = self.expr()?;
                self.sym(")")?;
                let body = self.block()?;
                Ok(Stmt::While(While { id: LoopId(0), guard, body: Box::new(body), from_for: false }))
            }
            Tok::Kw("for") => {
                self.bump();
                self.sites.push((pos, true));
                let var = self.ident()?;
                self.sym("=")?;
                let from = self.expr()?;
                self.kw("to")?;
                let to = self.expr()?;
                let body = self.block()?;
                Ok(Stmt::For { var, from, to, body: Box::new(body) })
            }
            Tok::Kw("break") => {
                self.bump();
                self.sym("(")?;
                if self.is_sym("|") {
                    return self.oracle_break();
                }
                let e = self.expr()?;
                self.sym(")")?;
                Ok(Stmt::Break(e))
            }
            _ => self.error(&["skip", "identifier", "if", "while", "for", "break"]),
        }
    }

    fn oracle_break(&mut self) -> PResult<Stmt> {
        if !self.second_order {
            return Err(ParseError::at(self.pos(), "oracle breaks only occur in second-order programs", vec![]));
        }
        self.sym("|")?;
        let oracle = self.ovar()?;
        self.sym("(")?;
        let args = self.exprlist()?;
        self.sym(")")?;
        self.sym("|")?;
        self.sym(">")?;
        self.sym("|")?;
        let pos = self.pos();
        let again = self.ovar()?;
        if again != oracle {
            return Err(ParseError::at(pos, &format!("oracle break compares `{oracle}` with `{again}`"), vec![oracle]));
        }
        self.sym("(")?;
        let guard_vars = self.idlist(")")?;
        self.sym(")")?;
        self.sym("|")?;
        self.sym(")")?;
        Ok(Stmt::OracleBreak { oracle, args, guard_vars })
    }

    fn exprlist(&mut self) -> PResult<Vec<Expr>> {
        let mut out = Vec::new();
        if self.is_sym(")") {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.is_sym(",") {
                self.bump();
            } else {
                return Ok(out);
            }
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn peek_binop(&self) -> Option<(&'static str, u8)> {
        let name = match self.peek() {
            Tok::Kw(k) if *k == "and" || *k == "or" => *k,
            Tok::Sym(s) => *s,
            _ => return None,
        };
        BINOPS.iter().find(|(o, _)| *o == name).copied()
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.primary()?;
        while let Some((op, prec)) = self.peek_binop() {
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Op(op.to_string(), vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(x) => {
                self.bump();
                if !self.is_sym("(") {
                    return Ok(Expr::Var(x));
                }
                self.bump();
                let args = self.exprlist()?;
                self.sym(")")?;
                let Some(entry) = builtins().get(&x) else {
                    return Err(ParseError::at(pos, &format!("unknown operator `{x}`"), vec![]));
                };
                if entry.arity != args.len() {
                    return Err(ParseError::at(
                        pos,
                        &format!("operator `{x}` takes {} argument(s), got {}", entry.arity, args.len()),
                        vec![],
                    ));
                }
                Ok(Expr::Op(x, args))
            }
            Tok::OVar(x) => {
                if !self.second_order {
                    return Err(ParseError::at(pos, "oracle calls only occur in second-order programs", vec![]));
                }
                self.bump();
                self.sym("(")?;
                let args = self.exprlist()?;
                self.sym(")")?;
                Ok(Expr::OracleCall(x, args))
            }
            Tok::Kw("declass") => {
                self.bump();
                self.sym("(")?;
                let a = self.expr()?;
                if !self.is_sym(",") {
                    return Err(ParseError::at(self.pos(), "declass takes two arguments", vec![",".into()]));
                }
                self.bump();
                let b = self.expr()?;
                self.sym(")")?;
                Ok(Expr::declass(a, b))
            }
            Tok::Word(w) => {
                self.bump();
                Ok(Expr::Lit(w))
            }
            Tok::Unary(n) => {
                self.bump();
                Ok(Expr::Lit(Word::ones(n)))
            }
            Tok::Kw("true") => {
                self.bump();
                Ok(Expr::Lit(Word::one()))
            }
            Tok::Kw("false") => {
                self.bump();
                Ok(Expr::Lit(Word::zero()))
            }
            Tok::Kw("eps") => {
                self.bump();
                Ok(Expr::Lit(Word::empty()))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            _ => self.error(&["expression"]),
        }
    }
}

/// Arity of the first call to `x` in a procedure body.
fn used_arity(body: &Stmt, x: &str) -> Option<usize> {
    let mut found = None;
    body.visit(&mut |s| {
        if found.is_some() {
            return;
        }
        if let Stmt::OracleBreak { oracle, args, .. } = s {
            if oracle == x {
                found = Some(args.len());
            }
        }
    });
    if found.is_some() {
        return found;
    }
    for e in body.exprs() {
        for call in e.oracle_calls() {
            if let Expr::OracleCall(y, args) = call {
                if y == x {
                    return Some(args.len());
                }
            }
        }
    }
    None
}

/// Arity of the procedure parameter a boxed oracle is first passed to.
fn passed_arity(t: &Term, x: &str, procs: &[Procedure]) -> Option<usize> {
    match t {
        Term::Var(_) => None,
        Term::Call { proc, closures, args } => {
            for (i, c) in closures.iter().enumerate() {
                match c {
                    Closure::OracleVar(y) if y == x => {
                        if let Some(p) = procs.iter().find(|p| &p.name == proc) {
                            if let Some((_, a)) = p.oracle_params.get(i) {
                                return Some(*a);
                            }
                        }
                    }
                    Closure::Lambda(_, body) => {
                        if let Some(a) = passed_arity(body, x, procs) {
                            return Some(a);
                        }
                    }
                    _ => {}
                }
            }
            args.iter().find_map(|a| passed_arity(a, x, procs))
        }
    }
}
