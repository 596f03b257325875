//! Second-order programs: well-formedness, guardedness, simple typing, level
//! typing with `∞` for oracle answers, and evaluation with oracles and closures.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{free_variables, Closure, Expr, Level, Procedure, Program1, Program2, Stmt, Term};
use crate::interp1::{run_program, ExecConfig, ExecStats, Flag, Machine, OracleEnv, RuntimeStop, Store1};
use crate::opreg::{builtins, Discipline, Registry};
use crate::parser::{parse_program1, pretty_expr, pretty_stmt};
use crate::safety1::{infer_body_at, Explanation, Inference, VarTypeEnv};
use crate::word::{Symbol, Word};

// ---------------------------------------------------------------------------
// Well-formedness

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum WellFormedError {
    #[error("name {name} is declared in both {first} and {second}")]
    NameClash { name: String, first: String, second: String },
    #[error("procedure {procedure} uses {name}, which is neither a parameter nor a local")]
    OpenProcedure { procedure: String, name: String },
    #[error("procedure {name} is declared {count} times")]
    Duplicate { name: String, count: usize },
    #[error("procedure {name} is called but never declared")]
    Undeclared { name: String },
    #[error("free variable {name}")]
    Free { name: String },
}

fn term_calls(t: &Term, out: &mut Vec<String>, binders: &mut Vec<(String, String)>) {
    if let Term::Call { proc, closures, args } = t {
        out.push(proc.clone());
        for c in closures {
            if let Closure::Lambda(xs, body) = c {
                binders.extend(xs.iter().map(|x| (x.clone(), "a lambda".to_string())));
                term_calls(body, out, binders);
            }
        }
        args.iter().for_each(|a| term_calls(a, out, binders));
    }
}

fn stmt_oracles(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    s.visit(&mut |st| {
        if let Stmt::OracleBreak { oracle, .. } = st {
            out.insert(oracle.clone());
        }
    });
    for e in s.exprs() {
        for call in e.oracle_calls() {
            if let Expr::OracleCall(x, _) = call {
                out.insert(x.clone());
            }
        }
    }
    out
}

/// Name disjointness, closed procedures and unique declarations.
pub fn wellformed(p: &Program2) -> Result<(), WellFormedError> {
    let mut owner: HashMap<String, String> = HashMap::new();
    let mut claim = |name: &str, group: String| -> Result<(), WellFormedError> {
        if let Some(first) = owner.get(name) {
            return Err(WellFormedError::NameClash { name: name.into(), first: first.clone(), second: group });
        }
        owner.insert(name.into(), group);
        Ok(())
    };
    for (x, _) in &p.boxed_oracles {
        claim(x, "the box".into())?;
    }
    for x in &p.boxed {
        claim(x, "the box".into())?;
    }
    let mut calls = Vec::new();
    let mut binders = Vec::new();
    term_calls(&p.main, &mut calls, &mut binders);
    for (x, g) in binders {
        claim(&x, g)?;
    }
    for proc in &p.procedures {
        for (x, _) in &proc.oracle_params {
            claim(x, format!("the parameters of {}", proc.name))?;
        }
        for x in &proc.params {
            claim(x, format!("the parameters of {}", proc.name))?;
        }
        for x in &proc.locals {
            claim(x, format!("the locals of {}", proc.name))?;
        }
    }
    for proc in &p.procedures {
        let scope: BTreeSet<&String> = proc.params.iter().chain(&proc.locals).collect();
        if let Some(x) = proc.body.vars().into_iter().chain([proc.ret.clone()]).find(|x| !scope.contains(x)) {
            return Err(WellFormedError::OpenProcedure { procedure: proc.name.clone(), name: x });
        }
        let oracles: BTreeSet<&String> = proc.oracle_params.iter().map(|(x, _)| x).collect();
        if let Some(x) = stmt_oracles(&proc.body).into_iter().find(|x| !oracles.contains(x)) {
            return Err(WellFormedError::OpenProcedure { procedure: proc.name.clone(), name: x });
        }
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for proc in &p.procedures {
        *counts.entry(&proc.name).or_default() += 1;
    }
    if let Some((name, &count)) = counts.iter().find(|(_, &c)| c > 1) {
        return Err(WellFormedError::Duplicate { name: name.to_string(), count });
    }
    if let Some(name) = calls.into_iter().find(|c| !counts.contains_key(c.as_str())) {
        return Err(WellFormedError::Undeclared { name });
    }
    if let Some(name) = free_variables(p).into_iter().next() {
        return Err(WellFormedError::Free { name });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Guardedness

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("procedure {procedure}, `{statement}`: guardedness condition ({clause}) fails: {reason}")]
pub struct GuardednessError {
    pub procedure: String,
    pub statement: String,
    pub clause: u8,
    pub reason: String,
}

/// The oracle call an assignment right-hand side is allowed to contain, if any.
fn allowed_call(e: &Expr) -> Option<&Expr> {
    match e {
        Expr::OracleCall(..) => Some(e),
        Expr::Op(op, args) if op == "truncate" && !args.is_empty() && matches!(args[0], Expr::OracleCall(..)) => Some(&args[0]),
        Expr::Declass(a, _) if matches!(**a, Expr::OracleCall(..)) => Some(a),
        _ => None,
    }
}

fn check_rhs(e: &Expr) -> Result<Option<&Expr>, String> {
    let calls = e.oracle_calls();
    if calls.is_empty() {
        return Ok(None);
    }
    let Some(call) = allowed_call(e) else {
        return Err("an oracle call may only be a right-hand side or the first operand of truncate or declass".into());
    };
    if calls.len() > 1 {
        return Err("oracle calls are nested or repeated".into());
    }
    let Expr::OracleCall(_, args) = call else { unreachable!() };
    if let Some(rest) = match e {
        Expr::Op(_, args) => Some(&args[1..]),
        Expr::Declass(_, b) => Some(std::slice::from_ref(&**b)),
        _ => None,
    } {
        if rest.iter().any(Expr::contains_oracle) {
            return Err("oracle calls are nested or repeated".into());
        }
    }
    debug_assert!(!args.iter().any(Expr::contains_oracle));
    Ok(Some(call))
}

struct Guard<'a> {
    procedure: &'a str,
}

impl Guard<'_> {
    fn err(&self, s: &Stmt, clause: u8, reason: impl Into<String>) -> GuardednessError {
        GuardednessError { procedure: self.procedure.into(), statement: pretty_stmt(s), clause, reason: reason.into() }
    }

    fn stmt(&self, s: &Stmt, in_loop: bool) -> Result<(), GuardednessError> {
        match s {
            Stmt::Skip => Ok(()),
            Stmt::Assign(_, e) => {
                let call = check_rhs(e).map_err(|r| self.err(s, 1, r))?;
                if call.is_some() && in_loop {
                    return Err(self.err(s, 2, "not immediately preceded by a size break on the same call"));
                }
                Ok(())
            }
            Stmt::Seq(items) => {
                for (i, st) in items.iter().enumerate() {
                    if let (Stmt::Assign(_, e), true) = (st, in_loop) {
                        let call = check_rhs(e).map_err(|r| self.err(st, 1, r))?;
                        if let Some(Expr::OracleCall(x, args)) = call {
                            let guarded = i > 0
                                && matches!(&items[i - 1], Stmt::OracleBreak { oracle, args: bargs, .. } if oracle == x && bargs == args);
                            if !guarded {
                                return Err(self.err(st, 2, "not immediately preceded by a size break on the same call"));
                            }
                        }
                        continue;
                    }
                    self.stmt(st, in_loop)?;
                }
                Ok(())
            }
            Stmt::If(e, a, b) => {
                if e.contains_oracle() {
                    return Err(self.err(s, 1, "oracle call in a conditional guard"));
                }
                self.stmt(a, in_loop)?;
                self.stmt(b, in_loop)
            }
            Stmt::While(w) => {
                if w.guard.contains_oracle() {
                    return Err(self.err(s, 1, "oracle call in a loop guard"));
                }
                self.stmt(&w.body, true)
            }
            Stmt::Break(e) => {
                if e.contains_oracle() {
                    return Err(self.err(s, 1, "oracle call in a break guard"));
                }
                Ok(())
            }
            Stmt::OracleBreak { args, .. } => {
                if args.iter().any(Expr::contains_oracle) {
                    return Err(self.err(s, 1, "nested oracle call"));
                }
                Ok(())
            }
            Stmt::For { body, from, to, .. } => {
                if from.contains_oracle() || to.contains_oracle() {
                    return Err(self.err(s, 1, "oracle call in a loop bound"));
                }
                self.stmt(body, true)
            }
        }
    }
}

pub fn check_guarded(p: &Program2) -> Result<(), GuardednessError> {
    for proc in &p.procedures {
        Guard { procedure: &proc.name }.stmt(&proc.body, false)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Simple types

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SimpleType {
    W,
    /// `W × … × W → W` with the given arity, written curried.
    Fun(usize),
}

impl fmt::Display for SimpleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimpleType::W => write!(f, "W"),
            SimpleType::Fun(k) => {
                write!(f, "(")?;
                for _ in 0..*k {
                    write!(f, "W → ")?;
                }
                write!(f, "W)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimpleTypeEnv {
    pub vars: BTreeMap<String, SimpleType>,
    pub procedures: BTreeMap<String, String>,
    pub program_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum TypeError {
    #[error("unknown procedure {0}")]
    UnknownProcedure(String),
    #[error("{proc} expects {expected} {what}, got {got}")]
    Arity { proc: String, what: String, expected: usize, got: usize },
    #[error("{name} is used as {used} but has type {declared}")]
    Order { name: String, used: String, declared: String },
}

fn arrow(params: &[SimpleType]) -> String {
    let mut s = String::new();
    for t in params {
        s.push_str(&format!("{t} → "));
    }
    s.push('W');
    s
}

fn proc_type(p: &Procedure) -> String {
    let mut ts: Vec<SimpleType> = p.oracle_params.iter().map(|(_, a)| SimpleType::Fun(*a)).collect();
    ts.extend(p.params.iter().map(|_| SimpleType::W));
    arrow(&ts)
}

struct Simple<'a> {
    p: &'a Program2,
    env: BTreeMap<String, SimpleType>,
}

impl Simple<'_> {
    fn lookup(&self, x: &str) -> Option<SimpleType> {
        self.env.get(x).copied()
    }

    fn term(&mut self, t: &Term) -> Result<(), TypeError> {
        match t {
            Term::Var(x) => match self.lookup(x) {
                Some(SimpleType::Fun(_)) => Err(TypeError::Order { name: x.clone(), used: "W".into(), declared: self.env[x].to_string() }),
                _ => Ok(()),
            },
            Term::Call { proc, closures, args } => {
                let decl = self.p.procedure(proc).ok_or_else(|| TypeError::UnknownProcedure(proc.clone()))?;
                if closures.len() != decl.oracle_params.len() {
                    return Err(TypeError::Arity { proc: proc.clone(), what: "closures".into(), expected: decl.oracle_params.len(), got: closures.len() });
                }
                if args.len() != decl.params.len() {
                    return Err(TypeError::Arity { proc: proc.clone(), what: "arguments".into(), expected: decl.params.len(), got: args.len() });
                }
                for (c, (_, arity)) in closures.iter().zip(&decl.oracle_params) {
                    match c {
                        Closure::OracleVar(x) => match self.lookup(x) {
                            Some(SimpleType::Fun(k)) if k == *arity => {}
                            Some(other) => {
                                return Err(TypeError::Order { name: x.clone(), used: SimpleType::Fun(*arity).to_string(), declared: other.to_string() })
                            }
                            None => return Err(TypeError::Order { name: x.clone(), used: SimpleType::Fun(*arity).to_string(), declared: "nothing".into() }),
                        },
                        Closure::Lambda(xs, body) => {
                            if xs.len() != *arity {
                                return Err(TypeError::Arity { proc: proc.clone(), what: "lambda binders".into(), expected: *arity, got: xs.len() });
                            }
                            for x in xs {
                                self.env.insert(x.clone(), SimpleType::W);
                            }
                            self.term(body)?;
                        }
                    }
                }
                args.iter().try_for_each(|a| self.term(a))
            }
        }
    }

    fn procedure(&mut self, proc: &Procedure) -> Result<(), TypeError> {
        let order1: HashMap<&str, usize> = proc.oracle_params.iter().map(|(x, a)| (x.as_str(), *a)).collect();
        let mut result = Ok(());
        let mut check_call = |x: &str, n: usize| {
            if let Some(&a) = order1.get(x) {
                if a != n && result.is_ok() {
                    result = Err(TypeError::Arity { proc: proc.name.clone(), what: format!("arguments to {x}"), expected: a, got: n });
                }
            }
        };
        for e in proc.body.exprs() {
            for call in e.oracle_calls() {
                if let Expr::OracleCall(x, args) = call {
                    check_call(x, args.len());
                }
            }
        }
        proc.body.visit(&mut |s| {
            if let Stmt::OracleBreak { oracle, guard_vars, .. } = s {
                check_call(oracle, guard_vars.len());
            }
        });
        result?;
        for x in proc.body.vars() {
            if order1.contains_key(x.as_str()) {
                return Err(TypeError::Order { name: x, used: "W".into(), declared: "an order-1 parameter".into() });
            }
        }
        for (x, a) in &proc.oracle_params {
            self.env.insert(x.clone(), SimpleType::Fun(*a));
        }
        for x in proc.params.iter().chain(&proc.locals) {
            self.env.insert(x.clone(), SimpleType::W);
        }
        Ok(())
    }
}

pub fn simple_typecheck(p: &Program2) -> Result<SimpleTypeEnv, TypeError> {
    let mut s = Simple { p, env: BTreeMap::new() };
    let mut box_types = Vec::new();
    for (x, a) in &p.boxed_oracles {
        s.env.insert(x.clone(), SimpleType::Fun(*a));
        box_types.push(SimpleType::Fun(*a));
    }
    for x in &p.boxed {
        s.env.insert(x.clone(), SimpleType::W);
        box_types.push(SimpleType::W);
    }
    for proc in &p.procedures {
        s.procedure(proc)?;
    }
    s.term(&p.main)?;
    let procedures = p.procedures.iter().map(|q| (q.name.clone(), proc_type(q))).collect();
    Ok(SimpleTypeEnv { vars: s.env, procedures, program_type: arrow(&box_types) })
}

// ---------------------------------------------------------------------------
// Level typing

/// Ω(p): Γ over the order-0 parameters and locals, and `(τ, τin, τout)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcTyping {
    pub gamma: VarTypeEnv,
    pub level: Level,
    pub tin: u32,
    pub tout: u32,
    pub loop_levels: BTreeMap<String, Level>,
    #[serde(skip)]
    pub inference: Inference,
}

pub type ProcTypeEnv = BTreeMap<String, ProcTyping>;

fn proc_vars(proc: &Procedure) -> BTreeSet<String> {
    proc.params.iter().chain(&proc.locals).cloned().collect()
}

fn typing_of(inf: Inference, (tin, tout): (u32, u32)) -> ProcTyping {
    ProcTyping {
        gamma: inf.gamma.clone(),
        level: inf.level,
        tin,
        tout,
        loop_levels: inf.loop_levels.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        inference: inf,
    }
}

/// Checks the body under a given Γ and `(τin, τout)`.
pub fn level_typecheck_procedure(
    registry: &Registry,
    proc: &Procedure,
    gamma: &VarTypeEnv,
    context: (u32, u32),
) -> Result<ProcTyping, Explanation> {
    infer_body_at(registry, Discipline::SecondOrder, &proc.body, &proc_vars(proc), Some(gamma), context)
        .map(|inf| typing_of(inf, context))
}

/// Contexts tried for a declaration, `(0, 0)` first. The reported failure is the one at `(0, 0)`.
fn contexts(proc: &Procedure) -> Vec<(u32, u32)> {
    let top = proc_vars(proc).len() as u32 + proc.body.loops().len() as u32 + 1;
    let mut out = Vec::new();
    for tout in 0..=top {
        for tin in 0..=tout {
            out.push((tin, tout));
        }
    }
    out
}

pub fn infer_procedure(registry: &Registry, proc: &Procedure) -> Result<ProcTyping, Explanation> {
    let vars = proc_vars(proc);
    let mut first = None;
    for ctx in contexts(proc) {
        match infer_body_at(registry, Discipline::SecondOrder, &proc.body, &vars, None, ctx) {
            Ok(inf) => return Ok(typing_of(inf, ctx)),
            Err(e) => {
                first.get_or_insert(e);
            }
        }
    }
    Err(first.expect("at least one context"))
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "stage")]
pub enum SecondOrderError {
    #[error("not well-formed: {0}")]
    WellFormed(WellFormedError),
    #[error("not guarded: {0}")]
    Guardedness(GuardednessError),
    #[error("simple typing: {0}")]
    SimpleType(TypeError),
    #[error("procedure {procedure}: {explanation}")]
    Unsafe { procedure: String, explanation: Explanation },
}

impl SecondOrderError {
    /// Unsafe as opposed to rejected before level typing.
    pub fn is_unsafe(&self) -> bool {
        matches!(self, SecondOrderError::Unsafe { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SecondOrderTyping {
    pub omega: ProcTypeEnv,
    pub simple: SimpleTypeEnv,
}

pub fn infer_safety2(p: &Program2) -> Result<SecondOrderTyping, SecondOrderError> {
    infer_safety2_with(builtins(), p)
}

pub fn infer_safety2_with(registry: &Registry, p: &Program2) -> Result<SecondOrderTyping, SecondOrderError> {
    wellformed(p).map_err(SecondOrderError::WellFormed)?;
    check_guarded(p).map_err(SecondOrderError::Guardedness)?;
    let simple = simple_typecheck(p).map_err(SecondOrderError::SimpleType)?;
    let mut omega = ProcTypeEnv::new();
    for proc in &p.procedures {
        let t = infer_procedure(registry, proc)
            .map_err(|explanation| SecondOrderError::Unsafe { procedure: proc.name.clone(), explanation })?;
        omega.insert(proc.name.clone(), t);
    }
    Ok(SecondOrderTyping { omega, simple })
}

// ---------------------------------------------------------------------------
// Oracles

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleKind {
    Append1,
    Double,
    Const(Word),
    Bitflip,
    Program(Arc<Program1>),
}

/// A total word function given as input to a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Oracle {
    pub name: String,
    pub kind: OracleKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleSpecError {
    #[error("unknown oracle spec {0:?}; expected builtin:append1, builtin:double, builtin:bitflip, builtin:const:WORD or prog:PATH")]
    Unknown(String),
    #[error("bad constant word: {0}")]
    Word(String),
    #[error("cannot load {path}: {message}")]
    Program { path: String, message: String },
}

impl Oracle {
    pub fn builtin(kind: OracleKind) -> Oracle {
        let name = match &kind {
            OracleKind::Append1 => "append1".to_string(),
            OracleKind::Double => "double".to_string(),
            OracleKind::Const(w) => format!("const:{w}"),
            OracleKind::Bitflip => "bitflip".to_string(),
            OracleKind::Program(_) => "prog".to_string(),
        };
        Oracle { name, kind }
    }

    /// Parses `builtin:append1`, `builtin:double`, `builtin:bitflip`,
    /// `builtin:const:WORD` (the `builtin:` prefix is optional) or `prog:PATH`.
    pub fn parse_spec(spec: &str) -> Result<Oracle, OracleSpecError> {
        if let Some(path) = spec.strip_prefix("prog:") {
            let text = std::fs::read_to_string(path)
                .map_err(|e| OracleSpecError::Program { path: path.into(), message: e.to_string() })?;
            let p = parse_program1(&text).map_err(|e| OracleSpecError::Program { path: path.into(), message: e.to_string() })?;
            return Ok(Oracle { name: spec.into(), kind: OracleKind::Program(Arc::new(p)) });
        }
        let rest = spec.strip_prefix("builtin:").unwrap_or(spec);
        let kind = match rest {
            "append1" => OracleKind::Append1,
            "double" => OracleKind::Double,
            "bitflip" => OracleKind::Bitflip,
            _ => match rest.strip_prefix("const:") {
                Some(w) => OracleKind::Const(w.parse().map_err(|e: crate::word::WordError| OracleSpecError::Word(e.to_string()))?),
                None => return Err(OracleSpecError::Unknown(spec.into())),
            },
        };
        Ok(Oracle::builtin(kind))
    }

    /// Builtins read their first argument; program oracles take one argument per parameter.
    pub fn apply(&self, args: &[Word], budget: u64) -> Result<Word, RuntimeStop> {
        let first = args.first().cloned().unwrap_or_default();
        Ok(match &self.kind {
            OracleKind::Append1 => first.push(Symbol::One),
            OracleKind::Double => first.repeat(2),
            OracleKind::Const(w) => w.clone(),
            OracleKind::Bitflip => Word::from_symbols(
                first
                    .symbols()
                    .iter()
                    .map(|&s| match s {
                        Symbol::Zero => Symbol::One,
                        Symbol::One => Symbol::Zero,
                        Symbol::Hash => Symbol::Hash,
                    })
                    .collect(),
            ),
            OracleKind::Program(p) => {
                if p.params.len() != args.len() {
                    return Err(RuntimeStop::OracleFailure {
                        message: format!("oracle {} takes {} inputs, got {}", self.name, p.params.len(), args.len()),
                    });
                }
                match run_program(p, args, ExecConfig { budget, monitor: false }) {
                    Ok(r) => r.value,
                    Err(stop @ RuntimeStop::BudgetExhausted { .. }) => return Err(stop),
                    Err(other) => return Err(RuntimeStop::OracleFailure { message: format!("oracle {}: {other}", self.name) }),
                }
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Evaluation

enum Bound<'p> {
    Function(Arc<Oracle>),
    Lambda(&'p [String], &'p Term),
}

struct Frame<'p> {
    eval: &'p Evaluator<'p>,
    phi: HashMap<&'p str, Bound<'p>>,
}

impl OracleEnv for Frame<'_> {
    fn call(&self, m: &mut Machine, store: &Store1, oracle: &str, args: &[Word]) -> Result<Word, RuntimeStop> {
        match self.phi.get(oracle) {
            Some(Bound::Function(f)) => f.apply(args, m.config.budget),
            Some(Bound::Lambda(xs, body)) => {
                let mut inner = store.clone();
                for (x, w) in xs.iter().zip(args) {
                    inner.set(x, w.clone());
                }
                self.eval.term(m, &inner, body)
            }
            None => Err(RuntimeStop::OracleFailure { message: format!("{oracle} is not bound in this call") }),
        }
    }
}

struct Evaluator<'p> {
    program: &'p Program2,
    functions: HashMap<&'p str, Arc<Oracle>>,
}

impl<'p> Evaluator<'p> {
    fn term(&'p self, m: &mut Machine, store: &Store1, t: &'p Term) -> Result<Word, RuntimeStop> {
        m.tick()?;
        match t {
            Term::Var(x) => Ok(store.get(x).clone()),
            Term::Call { proc, closures, args } => {
                let decl = self
                    .program
                    .procedure(proc)
                    .ok_or_else(|| RuntimeStop::OracleFailure { message: format!("call of undeclared procedure {proc}") })?;
                let vals = args.iter().map(|a| self.term(m, store, a)).collect::<Result<Vec<_>, _>>()?;
                let mut phi = HashMap::new();
                for ((x, _), c) in decl.oracle_params.iter().zip(closures) {
                    let bound = match c {
                        Closure::OracleVar(f) => Bound::Function(
                            self.functions
                                .get(f.as_str())
                                .cloned()
                                .ok_or_else(|| RuntimeStop::OracleFailure { message: format!("no function bound to {f}") })?,
                        ),
                        Closure::Lambda(xs, body) => Bound::Lambda(xs, body),
                    };
                    phi.insert(x.as_str(), bound);
                }
                let mut local = store.clone();
                for (x, w) in decl.params.iter().zip(vals) {
                    local.set(x, w);
                }
                for y in &decl.locals {
                    local.set(y, Word::empty());
                }
                let frame = Frame { eval: self, phi };
                // Either flag ends the call.
                let _: Flag = m.exec(&mut local, &decl.body, &frame)?;
                Ok(local.get(&decl.ret).clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult2 {
    pub value: Word,
    pub stats: ExecStats,
}

pub fn eval_program2(p: &Program2, oracles: &[Oracle], inputs: &[Word], config: ExecConfig) -> Result<RunResult2, RuntimeStop> {
    eval_program2_with(builtins(), p, oracles, inputs, config).map_err(|(stop, _)| stop)
}

/// Like [`eval_program2`], but also returns the statistics gathered before a stop.
pub fn eval_program2_with(
    registry: &Registry,
    p: &Program2,
    oracles: &[Oracle],
    inputs: &[Word],
    config: ExecConfig,
) -> Result<RunResult2, (RuntimeStop, ExecStats)> {
    let mismatch = |what: &str, want: usize, got: usize| {
        (RuntimeStop::OracleFailure { message: format!("expected {want} {what}, got {got}") }, ExecStats::default())
    };
    if oracles.len() != p.boxed_oracles.len() {
        return Err(mismatch("oracles", p.boxed_oracles.len(), oracles.len()));
    }
    if inputs.len() != p.boxed.len() {
        return Err(mismatch("inputs", p.boxed.len(), inputs.len()));
    }
    let functions = p.boxed_oracles.iter().map(|(x, _)| x.as_str()).zip(oracles.iter().cloned().map(Arc::new)).collect();
    let ev = Evaluator { program: p, functions };
    let mut store = Store1::new();
    for (x, w) in p.boxed.iter().zip(inputs) {
        store.set(x, w.clone());
    }
    let mut m = Machine::new(registry, config);
    match ev.term(&mut m, &store, &p.main) {
        Ok(value) => Ok(RunResult2 { value, stats: m.stats }),
        Err(stop) => Err((stop, m.stats)),
    }
}

/// A first-order program as a single oracle-free procedure.
pub fn embed_program1(p: &Program1) -> Program2 {
    let taken = p.variables();
    let boxed: Vec<String> = p
        .params
        .iter()
        .map(|x| {
            let mut name = format!("{x}_in");
            while taken.contains(&name) {
                name.push('_');
            }
            name
        })
        .collect();
    let locals = taken.iter().filter(|x| !p.params.contains(x)).cloned().collect();
    Program2 {
        boxed_oracles: vec![],
        boxed: boxed.clone(),
        procedures: vec![Procedure {
            name: "main".into(),
            oracle_params: vec![],
            params: p.params.clone(),
            locals,
            body: p.body.clone(),
            ret: p.ret.clone(),
        }],
        main: Term::Call { proc: "main".into(), closures: vec![], args: boxed.into_iter().map(Term::Var).collect() },
    }
}

/// Text of an oracle call, for diagnostics.
pub fn describe_call(x: &str, args: &[Expr]) -> String {
    pretty_expr(&Expr::OracleCall(x.into(), args.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program2;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn identity_through_call() {
        let p = parse_program2("box [x] in declare p(,x){ skip return x } in call p(,x)").unwrap();
        let r = eval_program2(&p, &[], &[w("10")], ExecConfig::default()).unwrap();
        assert_eq!(r.value, w("10"));
        assert_eq!(simple_typecheck(&p).unwrap().program_type, "W → W");
    }

    #[test]
    fn box_only_program_type() {
        let p = parse_program2("box [x] in x").unwrap();
        assert_eq!(simple_typecheck(&p).unwrap().program_type, "W → W");
    }

    #[test]
    fn nested_oracle_call_is_unguarded() {
        let p = parse_program2(
            "box [F, u] in declare p(X, z) { var y; while (z > u0) { y := X(X(z)); z := z - u1 } return y } in call p(F, u)",
        )
        .unwrap();
        assert_eq!(check_guarded(&p).unwrap_err().clause, 1);
    }

    fn proc_of(body: &str) -> Procedure {
        let src = format!("box [F, u] in declare p(X, z) {{ var y, k; {body} return y }} in call p(F, u)");
        parse_program2(&src).unwrap().procedures.remove(0)
    }

    #[test]
    fn oracle_guard_is_unsafe_at_the_loop_rule() {
        let e = infer_procedure(builtins(), &proc_of("while (X(z)) { z := tl(z) }")).unwrap_err();
        assert!(e.rule == "WI" || e.rule == "WH", "{e}");
    }

    #[test]
    fn raw_oracle_assignment_in_a_loop_is_unsafe_at_asg() {
        let e = infer_procedure(builtins(), &proc_of("while (z > u0) { y := X(z); z := z - u1 }")).unwrap_err();
        assert_eq!(e.rule, "ASG", "{e}");
    }

    #[test]
    fn loop_free_truncated_oracle_answer_is_safe() {
        let src = "box [F, u] in declare p(X, z) { var y; y := truncate(X(z), z) return y } in call p(F, u)";
        let t = infer_safety2(&parse_program2(src).unwrap()).unwrap();
        assert!(t.omega["p"].tin >= 1);
    }

    #[test]
    fn oracle_specs() {
        assert_eq!(Oracle::parse_spec("builtin:append1").unwrap().apply(&[w("10")], 10).unwrap(), w("101"));
        assert_eq!(Oracle::parse_spec("const:0#1").unwrap().apply(&[w("10")], 10).unwrap(), w("0#1"));
        assert_eq!(Oracle::parse_spec("builtin:bitflip").unwrap().apply(&[w("10#")], 10).unwrap(), w("01#"));
        assert!(Oracle::parse_spec("builtin:nope").is_err());
    }
}
