//! Abstract syntax of the first-order and second-order languages, and levels.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::word::Word;

/// A level: a natural number or the top element `∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Fin(u32),
    Inf,
}

impl Level {
    pub const ZERO: Level = Level::Fin(0);

    pub fn join(self, other: Level) -> Level {
        self.max(other)
    }

    pub fn meet(self, other: Level) -> Level {
        self.min(other)
    }

    pub fn is_inf(self) -> bool {
        self == Level::Inf
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Level::Fin(n) => Some(n),
            Level::Inf => None,
        }
    }

    /// `⊓` over a list; the empty meet is `∞`.
    pub fn meet_all(levels: impl IntoIterator<Item = Level>) -> Level {
        levels.into_iter().fold(Level::Inf, Level::meet)
    }

    /// `⊔` over a list; the empty join is `0`.
    pub fn join_all(levels: impl IntoIterator<Item = Level>) -> Level {
        levels.into_iter().fold(Level::ZERO, Level::join)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Fin(n) => write!(f, "{n}"),
            Level::Inf => write!(f, "inf"),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Level::Fin(n) => s.serialize_u32(*n),
            Level::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Level, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Level::Fin(n)),
            Raw::Str(s) if s == "inf" || s == "∞" => Ok(Level::Inf),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad level {s:?}"))),
        }
    }
}

/// Loop identifier, assigned in pre-order over the whole program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LoopId(pub u32);

impl fmt::Display for LoopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    /// Literal constant; typed through the registry's constant entries.
    Lit(Word),
    Op(String, Vec<Expr>),
    Declass(Box<Expr>, Box<Expr>),
    OracleCall(String, Vec<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn op(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Op(name.to_string(), args)
    }

    pub fn declass(e1: Expr, e2: Expr) -> Expr {
        Expr::Declass(Box::new(e1), Box::new(e2))
    }

    pub fn vars_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Lit(_) => {}
            Expr::Op(_, args) | Expr::OracleCall(_, args) => {
                args.iter().for_each(|a| a.vars_into(out));
            }
            Expr::Declass(a, b) => {
                a.vars_into(out);
                b.vars_into(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.vars_into(&mut out);
        out
    }

    pub fn contains_oracle(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Lit(_) => false,
            Expr::OracleCall(..) => true,
            Expr::Op(_, args) => args.iter().any(Expr::contains_oracle),
            Expr::Declass(a, b) => a.contains_oracle() || b.contains_oracle(),
        }
    }

    /// Every oracle call in the expression, outermost first.
    pub fn oracle_calls(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn go<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::Var(_) | Expr::Lit(_) => {}
                Expr::OracleCall(_, args) => {
                    out.push(e);
                    args.iter().for_each(|a| go(a, out));
                }
                Expr::Op(_, args) => args.iter().for_each(|a| go(a, out)),
                Expr::Declass(a, b) => {
                    go(a, out);
                    go(b, out);
                }
            }
        }
        go(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct While {
    pub id: LoopId,
    pub guard: Expr,
    pub body: Box<Stmt>,
    /// Set when the loop came from desugaring a `for`.
    pub from_for: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Skip,
    Assign(String, Expr),
    /// Flattened sequence of at least two statements, none of them a `Seq`.
    Seq(Vec<Stmt>),
    If(Expr, Box<Stmt>, Box<Stmt>),
    While(While),
    Break(Expr),
    /// `break(|X(args)| > |X(guard_vars)|)`.
    OracleBreak {
        oracle: String,
        args: Vec<Expr>,
        guard_vars: Vec<String>,
    },
    For {
        var: String,
        from: Expr,
        to: Expr,
        body: Box<Stmt>,
    },
}

impl Stmt {
    /// Builds a sequence, flattening nested sequences and dropping nothing.
    pub fn seq(items: Vec<Stmt>) -> Stmt {
        let mut flat = Vec::new();
        for s in items {
            match s {
                Stmt::Seq(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Stmt::Skip,
            1 => flat.pop().unwrap(),
            _ => Stmt::Seq(flat),
        }
    }

    pub fn while_loop(id: u32, guard: Expr, body: Stmt) -> Stmt {
        Stmt::While(While { id: LoopId(id), guard, body: Box::new(body), from_for: false })
    }

    /// The statements of a sequence, or the statement itself.
    pub fn as_list(&self) -> &[Stmt] {
        match self {
            Stmt::Seq(items) => items,
            other => std::slice::from_ref(other),
        }
    }

    pub fn vars_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Stmt::Skip => {}
            Stmt::Assign(x, e) => {
                out.insert(x.clone());
                e.vars_into(out);
            }
            Stmt::Seq(items) => items.iter().for_each(|s| s.vars_into(out)),
            Stmt::If(e, a, b) => {
                e.vars_into(out);
                a.vars_into(out);
                b.vars_into(out);
            }
            Stmt::While(w) => {
                w.guard.vars_into(out);
                w.body.vars_into(out);
            }
            Stmt::Break(e) => e.vars_into(out),
            Stmt::OracleBreak { args, guard_vars, .. } => {
                args.iter().for_each(|a| a.vars_into(out));
                out.extend(guard_vars.iter().cloned());
            }
            Stmt::For { var, from, to, body } => {
                out.insert(var.clone());
                from.vars_into(out);
                to.vars_into(out);
                body.vars_into(out);
            }
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.vars_into(&mut out);
        out
    }

    /// Visits every statement in pre-order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::Seq(items) => items.iter().for_each(|s| s.visit(f)),
            Stmt::If(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Stmt::While(w) => w.body.visit(f),
            Stmt::For { body, .. } => body.visit(f),
            _ => {}
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut Stmt)) {
        f(self);
        match self {
            Stmt::Seq(items) => items.iter_mut().for_each(|s| s.visit_mut(f)),
            Stmt::If(_, a, b) => {
                a.visit_mut(f);
                b.visit_mut(f);
            }
            Stmt::While(w) => w.body.visit_mut(f),
            Stmt::For { body, .. } => body.visit_mut(f),
            _ => {}
        }
    }

    pub fn loops(&self) -> Vec<&While> {
        let mut out = Vec::new();
        self.visit(&mut |s| {
            if let Stmt::While(w) = s {
                out.push(w);
            }
        });
        out
    }

    /// Every expression occurring directly in this statement tree, in pre-order.
    pub fn exprs(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.visit(&mut |s| match s {
            Stmt::Assign(_, e) | Stmt::Break(e) => out.push(e),
            Stmt::If(e, ..) => out.push(e),
            Stmt::While(w) => out.push(&w.guard),
            Stmt::OracleBreak { args, .. } => out.extend(args.iter()),
            Stmt::For { from, to, .. } => {
                out.push(from);
                out.push(to);
            }
            Stmt::Skip | Stmt::Seq(_) => {}
        });
        out
    }

    pub fn contains_for(&self) -> bool {
        let mut found = false;
        self.visit(&mut |s| found |= matches!(s, Stmt::For { .. }));
        found
    }
}

/// Renumbers loops in pre-order starting at `next`; returns the next free id.
pub fn assign_loop_ids(s: &mut Stmt, mut next: u32) -> u32 {
    s.visit_mut(&mut |st| {
        if let Stmt::While(w) = st {
            w.id = LoopId(next);
            next += 1;
        }
    });
    next
}

/// Maximum number of nested loops along any path.
pub fn loop_nesting_depth(s: &Stmt) -> usize {
    match s {
        Stmt::Skip | Stmt::Assign(..) | Stmt::Break(_) | Stmt::OracleBreak { .. } => 0,
        Stmt::Seq(items) => items.iter().map(loop_nesting_depth).max().unwrap_or(0),
        Stmt::If(_, a, b) => loop_nesting_depth(a).max(loop_nesting_depth(b)),
        Stmt::While(w) => 1 + loop_nesting_depth(&w.body),
        Stmt::For { body, .. } => 1 + loop_nesting_depth(body),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program1 {
    pub params: Vec<String>,
    pub body: Stmt,
    pub ret: String,
}

impl Program1 {
    /// Parameters, body variables and the returned variable.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut vars = self.body.vars();
        vars.extend(self.params.iter().cloned());
        vars.insert(self.ret.clone());
        vars
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Procedure {
    pub name: String,
    pub oracle_params: Vec<(String, usize)>,
    pub params: Vec<String>,
    pub locals: Vec<String>,
    pub body: Stmt,
    pub ret: String,
}

impl Procedure {
    pub fn variables(&self) -> BTreeSet<String> {
        let mut vars = self.body.vars();
        vars.extend(self.params.iter().cloned());
        vars.extend(self.locals.iter().cloned());
        vars.insert(self.ret.clone());
        vars
    }

    pub fn oracle_arity(&self, name: &str) -> Option<usize> {
        self.oracle_params.iter().find(|(x, _)| x == name).map(|(_, a)| *a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Call { proc: String, closures: Vec<Closure>, args: Vec<Term> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Closure {
    OracleVar(String),
    Lambda(Vec<String>, Box<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program2 {
    pub boxed_oracles: Vec<(String, usize)>,
    pub boxed: Vec<String>,
    pub procedures: Vec<Procedure>,
    pub main: Term,
}

impl Program2 {
    pub fn procedure(&self, name: &str) -> Option<&Procedure> {
        self.procedures.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Program {
    First(Program1),
    Second(Program2),
}

fn term_free_vars(t: &Term, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match t {
        Term::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Term::Call { closures, args, .. } => {
            for c in closures {
                match c {
                    Closure::OracleVar(x) => {
                        if !bound.contains(x) {
                            out.insert(x.clone());
                        }
                    }
                    Closure::Lambda(xs, body) => {
                        let mark = bound.len();
                        bound.extend(xs.iter().cloned());
                        term_free_vars(body, bound, out);
                        bound.truncate(mark);
                    }
                }
            }
            args.iter().for_each(|a| term_free_vars(a, bound, out));
        }
    }
}

/// Variables not bound by the box, procedure parameters and locals, or lambda binders.
pub fn free_variables(p: &Program2) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut bound: Vec<String> = p.boxed.clone();
    bound.extend(p.boxed_oracles.iter().map(|(x, _)| x.clone()));
    term_free_vars(&p.main, &mut bound, &mut out);
    for proc in &p.procedures {
        let mut local: BTreeSet<String> = proc.params.iter().cloned().collect();
        local.extend(proc.locals.iter().cloned());
        for x in proc.variables() {
            if !local.contains(&x) {
                out.insert(x);
            }
        }
        let order1: BTreeSet<&String> = proc.oracle_params.iter().map(|(x, _)| x).collect();
        let mut used_oracles = BTreeSet::new();
        proc.body.visit(&mut |s| {
            if let Stmt::OracleBreak { oracle, .. } = s {
                used_oracles.insert(oracle.clone());
            }
        });
        for e in proc.body.exprs() {
            for call in e.oracle_calls() {
                if let Expr::OracleCall(x, _) = call {
                    used_oracles.insert(x.clone());
                }
            }
        }
        out.extend(used_oracles.into_iter().filter(|x| !order1.contains(x)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_lattice() {
        let a = Level::Fin(3);
        assert_eq!(a.meet(Level::Inf), a);
        assert_eq!(a.join(Level::Inf), Level::Inf);
        assert!(Level::Fin(100) < Level::Inf);
        assert_eq!(Level::meet_all([]), Level::Inf);
    }

    #[test]
    fn nesting_depth() {
        assert_eq!(loop_nesting_depth(&Stmt::Skip), 0);
        let inner = Stmt::while_loop(1, Expr::var("y"), Stmt::Skip);
        let outer = Stmt::while_loop(0, Expr::var("x"), inner);
        assert_eq!(loop_nesting_depth(&outer), 2);
    }

    #[test]
    fn seq_flattens() {
        let s = Stmt::seq(vec![
            Stmt::Skip,
            Stmt::seq(vec![Stmt::Assign("x".into(), Expr::var("y")), Stmt::Skip]),
        ]);
        assert_eq!(s.as_list().len(), 3);
    }

    #[test]
    fn free_vars_of_small_programs() {
        let closed = Program2 {
            boxed_oracles: vec![],
            boxed: vec!["x".into()],
            procedures: vec![],
            main: Term::Var("x".into()),
        };
        assert!(free_variables(&closed).is_empty());
        let open = Program2 {
            main: Term::Call {
                proc: "p".into(),
                closures: vec![Closure::Lambda(vec!["y".into()], Box::new(Term::Var("y".into())))],
                args: vec![Term::Var("z".into())],
            },
            ..closed
        };
        assert_eq!(free_variables(&open), BTreeSet::from(["z".to_string()]));
    }
}
