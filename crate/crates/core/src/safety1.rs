//! Safety of first-order programs: undeclassified variables, the level-based
//! typing rules, constraint-based inference of Γ, and a brute-force oracle.
//!
//! The constraint engine is shared with the second-order checker, which adds
//! the `∞` level for oracle answers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{Expr, Level, LoopId, Program1, Stmt};
use crate::opreg::{builtins, literal_name, Discipline, LevelPattern, OperatorClass, OperatorEntry, Registry};
use crate::parser::{pretty_expr, pretty_stmt};

/// `U(e)`: every variable of `e` except those occurring only under a declass first operand.
pub fn undeclassified_vars(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn go(e: &Expr, out: &mut BTreeSet<String>) {
        match e {
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Lit(_) => {}
            Expr::Op(_, args) | Expr::OracleCall(_, args) => args.iter().for_each(|a| go(a, out)),
            Expr::Declass(_, b) => go(b, out),
        }
    }
    go(e, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("variable {var} has level inf; first-order variable levels are finite")]
pub struct InfiniteLevel {
    pub var: String,
}

/// Γ: variable levels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VarTypeEnv(BTreeMap<String, Level>);

impl VarTypeEnv {
    pub fn new() -> VarTypeEnv {
        VarTypeEnv::default()
    }

    pub fn finite<'a>(pairs: impl IntoIterator<Item = (&'a str, u32)>) -> VarTypeEnv {
        VarTypeEnv(pairs.into_iter().map(|(x, l)| (x.to_string(), Level::Fin(l))).collect())
    }

    pub fn from_levels(map: BTreeMap<String, Level>) -> Result<VarTypeEnv, InfiniteLevel> {
        if let Some((x, _)) = map.iter().find(|(_, l)| l.is_inf()) {
            return Err(InfiniteLevel { var: x.clone() });
        }
        Ok(VarTypeEnv(map))
    }

    pub fn get(&self, x: &str) -> Option<Level> {
        self.0.get(x).copied()
    }

    pub fn set(&mut self, x: &str, l: u32) {
        self.0.insert(x.to_string(), Level::Fin(l));
    }

    pub fn levels(&self) -> &BTreeMap<String, Level> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Rule {
    Var,
    Op,
    Dcl,
    Sub,
    Skp,
    Asg,
    Seq,
    Cnd,
    Wh,
    Wi,
    Brk,
    Orc,
    Obk,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Var => "VAR",
            Rule::Op => "OP",
            Rule::Dcl => "DCL",
            Rule::Sub => "SUB",
            Rule::Skp => "SKP",
            Rule::Asg => "ASG",
            Rule::Seq => "SEQ",
            Rule::Cnd => "CND",
            Rule::Wh => "WH",
            Rule::Wi => "WI",
            Rule::Brk => "BRK",
            Rule::Orc => "ORC",
            Rule::Obk => "OBK",
        };
        f.write_str(s)
    }
}

/// `Γ, Δ ⊢^{tin}_{tout} subject : level`, with its premises.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Judgment {
    pub rule: Rule,
    pub subject: String,
    pub tin: u32,
    pub tout: u32,
    pub level: Level,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub premises: Vec<Judgment>,
}

pub type TypingDerivation = Judgment;

impl Judgment {
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Judgment::size).sum::<usize>()
    }

    /// Every judgment in pre-order.
    pub fn walk(&self) -> Vec<&Judgment> {
        let mut out = vec![self];
        for p in &self.premises {
            out.extend(p.walk());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Derivation checking

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{rule} at `{subject}`: {message}")]
pub struct DerivationError {
    pub rule: String,
    pub subject: String,
    pub message: String,
}

/// Rule-by-rule checker. SUB may be explicit or folded into statement premises,
/// where a premise of level `τ1` stands for a use at any `τ2 ≥ τ1`.
pub struct Checker<'a> {
    pub registry: &'a Registry,
    pub discipline: Discipline,
    pub gamma: &'a VarTypeEnv,
}

fn bad(j: &Judgment, message: impl Into<String>) -> DerivationError {
    DerivationError { rule: j.rule.to_string(), subject: j.subject.clone(), message: message.into() }
}

fn ensure(cond: bool, j: &Judgment, message: &str) -> Result<(), DerivationError> {
    if cond {
        Ok(())
    } else {
        Err(bad(j, message))
    }
}

impl Checker<'_> {
    fn gamma_of(&self, x: &str, j: &Judgment) -> Result<Level, DerivationError> {
        self.gamma.get(x).ok_or_else(|| bad(j, format!("{x} is not typed by Γ")))
    }

    fn context(&self, j: &Judgment, tin: u32, tout: u32) -> Result<(), DerivationError> {
        ensure(j.tin == tin && j.tout == tout, j, &format!("expected context ({tin}, {tout}), found ({}, {})", j.tin, j.tout))
    }

    fn rule(&self, j: &Judgment, rule: Rule, premises: usize) -> Result<(), DerivationError> {
        ensure(j.rule == rule, j, &format!("expected rule {rule}"))?;
        ensure(j.premises.len() == premises, j, &format!("expected {premises} premises, found {}", j.premises.len()))
    }

    pub fn expr(&self, e: &Expr, j: &Judgment, tin: u32, tout: u32) -> Result<(), DerivationError> {
        self.context(j, tin, tout)?;
        let (fin, fout) = (Level::Fin(tin), Level::Fin(tout));
        match e {
            Expr::Var(x) => {
                self.rule(j, Rule::Var, 0)?;
                ensure(j.level == self.gamma_of(x, j)?, j, "level differs from Γ")
            }
            Expr::Lit(w) => {
                self.rule(j, Rule::Op, 0)?;
                let ok = self.registry.delta_membership(&literal_name(w), fin, fout, &[j.level], self.discipline);
                ensure(ok == Ok(true), j, "constant level not in Δ")
            }
            Expr::Op(op, args) => {
                self.rule(j, Rule::Op, args.len())?;
                for (a, p) in args.iter().zip(&j.premises) {
                    self.expr(a, p, tin, tout)?;
                }
                let mut cand: Vec<Level> = j.premises.iter().map(|p| p.level).collect();
                cand.push(j.level);
                let ok = self.registry.delta_membership(op, fin, fout, &cand, self.discipline);
                ensure(ok == Ok(true), j, "operator type not in Δ")
            }
            Expr::Declass(a, b) => {
                self.rule(j, Rule::Dcl, 2)?;
                self.expr(a, &j.premises[0], tin, tout)?;
                self.expr(b, &j.premises[1], tin, tout)?;
                ensure(j.premises[1].level == fout, j, "second operand must have level tout")?;
                ensure(j.premises[0].level <= j.level && j.level <= fout, j, "requires τ1 ≤ τ ≤ tout")
            }
            Expr::OracleCall(_, args) => {
                ensure(self.discipline == Discipline::SecondOrder, j, "oracle call in a first-order program")?;
                self.rule(j, Rule::Orc, args.len())?;
                for (a, p) in args.iter().zip(&j.premises) {
                    self.expr(a, p, tin, tout)?;
                }
                ensure(j.level == Level::Inf, j, "oracle calls have level inf")
            }
        }
    }

    pub fn stmt(&self, s: &Stmt, j: &Judgment, tin: u32, tout: u32) -> Result<(), DerivationError> {
        self.context(j, tin, tout)?;
        if j.rule == Rule::Sub {
            ensure(j.premises.len() == 1, j, "SUB has one premise")?;
            ensure(j.premises[0].level <= j.level, j, "SUB may only raise the level")?;
            return self.stmt(s, &j.premises[0], tin, tout);
        }
        let so = self.discipline == Discipline::SecondOrder;
        match s {
            Stmt::Skip => {
                self.rule(j, Rule::Skp, 0)?;
                ensure(j.level == Level::ZERO, j, "skip has level 0")
            }
            Stmt::Assign(x, e) => {
                self.rule(j, Rule::Asg, 1)?;
                let p = &j.premises[0];
                self.expr(e, p, tin, tout)?;
                let gx = self.gamma_of(x, j)?;
                ensure(j.level == gx, j, "level differs from Γ of the target")?;
                ensure(tout == 0 || gx <= p.level, j, "inside a loop the target level must not exceed the expression level")?;
                ensure(!so || !p.level.is_inf(), j, "an oracle answer cannot be assigned")
            }
            Stmt::Seq(items) => self.seq(items, j, tin, tout),
            Stmt::If(e, a, b) => {
                self.rule(j, Rule::Cnd, 3)?;
                self.expr(e, &j.premises[0], tin, tout)?;
                self.stmt(a, &j.premises[1], tin, tout)?;
                self.stmt(b, &j.premises[2], tin, tout)?;
                ensure(j.level == j.premises[0].level, j, "level differs from the guard")?;
                ensure(j.premises[1].level <= j.level && j.premises[2].level <= j.level, j, "branch above the guard level")
            }
            Stmt::While(w) => {
                ensure(j.rule == Rule::Wi || j.rule == Rule::Wh, j, "expected rule WI or WH")?;
                ensure(j.premises.len() == 2, j, "expected 2 premises")?;
                let tau = j.level.finite().ok_or_else(|| bad(j, "loop level must be finite"))?;
                ensure(tau >= 1, j, "loop level must be at least 1")?;
                let inner_out = if j.rule == Rule::Wi {
                    ensure(tin == 0 && tout == 0, j, "WI applies to outermost loops only")?;
                    tau
                } else {
                    ensure(tau <= tout, j, "requires τ ≤ tout")?;
                    tout
                };
                self.expr(&w.guard, &j.premises[0], tau, inner_out)?;
                self.stmt(&w.body, &j.premises[1], tau, inner_out)?;
                ensure(j.premises[0].level == j.level, j, "guard level differs from the loop level")?;
                ensure(j.premises[1].level <= j.level, j, "body above the loop level")
            }
            Stmt::Break(e) => {
                self.rule(j, Rule::Brk, 1)?;
                self.expr(e, &j.premises[0], tin, tout)?;
                ensure(Level::Fin(tin) <= j.premises[0].level, j, "guard below tin")?;
                ensure(j.level == Level::Fin(tin), j, "break has level tin")
            }
            Stmt::OracleBreak { oracle, args, guard_vars } => {
                ensure(so, j, "oracle break in a first-order program")?;
                self.rule(j, Rule::Obk, 2 + guard_vars.len())?;
                self.expr(&Expr::OracleCall(oracle.clone(), args.clone()), &j.premises[0], tin, tout)?;
                let refs: Vec<Expr> = guard_vars.iter().map(|x| Expr::Var(x.clone())).collect();
                self.expr(&Expr::OracleCall(oracle.clone(), refs.clone()), &j.premises[1], tin, tout)?;
                for (x, p) in refs.iter().zip(&j.premises[2..]) {
                    self.expr(x, p, tin, tout)?;
                }
                let min = Level::meet_all(j.premises[2..].iter().map(|p| p.level));
                ensure(Level::Fin(tout) < min, j, "guard variables must be above tout")?;
                ensure(j.level == Level::Fin(tin), j, "break has level tin")
            }
            Stmt::For { .. } => Err(bad(j, "for loops are checked after desugaring")),
        }
    }

    /// Sequences read as right-nested binary `s1; (s2; …)`.
    fn seq(&self, items: &[Stmt], j: &Judgment, tin: u32, tout: u32) -> Result<(), DerivationError> {
        if items.len() == 1 {
            return self.stmt(&items[0], j, tin, tout);
        }
        self.context(j, tin, tout)?;
        if j.rule == Rule::Sub {
            ensure(j.premises.len() == 1 && j.premises[0].level <= j.level, j, "bad SUB")?;
            return self.seq(items, &j.premises[0], tin, tout);
        }
        self.rule(j, Rule::Seq, 2)?;
        self.stmt(&items[0], &j.premises[0], tin, tout)?;
        self.seq(&items[1..], &j.premises[1], tin, tout)?;
        ensure(j.premises.iter().all(|p| p.level <= j.level), j, "premise above the sequence level")
    }
}

/// Checks `Γ, Δ ⊢^{tin}_{tout} body : τ` against the maximal safe Δ.
pub fn check_body(
    registry: &Registry,
    discipline: Discipline,
    body: &Stmt,
    gamma: &VarTypeEnv,
    tin: u32,
    tout: u32,
    d: &TypingDerivation,
) -> Result<(), DerivationError> {
    Checker { registry, discipline, gamma }.stmt(body, d, tin, tout)
}

/// Whether `d` is a derivation of `Γ, Δ ⊢⁰₀ body(p) : τ` for a finite τ.
pub fn check_derivation(p: &Program1, gamma: &VarTypeEnv, d: &TypingDerivation) -> bool {
    check_derivation_with(builtins(), p, gamma, d).is_ok()
}

pub fn check_derivation_with(
    registry: &Registry,
    p: &Program1,
    gamma: &VarTypeEnv,
    d: &TypingDerivation,
) -> Result<(), DerivationError> {
    if let Some(x) = gamma.levels().iter().find(|(_, l)| l.is_inf()).map(|(x, _)| x) {
        return Err(bad(d, format!("Γ({x}) is inf")));
    }
    if d.level.is_inf() {
        return Err(bad(d, "program level must be finite"));
    }
    check_body(registry, Discipline::FirstOrder, &p.body, gamma, 0, 0, d)
}

// ---------------------------------------------------------------------------
// Constraints

/// A level term: the constant 0, an unknown, or `∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lt {
    Zero,
    U(usize),
    Inf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Origin {
    rule: String,
    statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Atom {
    /// `hi ≥ lo + k`, with `lo = None` standing for 0.
    Ge { hi: usize, lo: Option<usize>, k: u32 },
    Le { v: usize, c: u32 },
    False(String),
}

#[derive(Debug, Clone)]
struct Constraint {
    atom: Atom,
    origin: Origin,
}

#[derive(Debug, Clone)]
struct Forbid {
    op: String,
    comps: Vec<(usize, u32)>,
    origin: Origin,
}

/// Why a program has no typing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Error)]
#[error("unsafe at {rule} in `{statement}`: {constraint}")]
pub struct Explanation {
    pub rule: String,
    pub statement: String,
    pub constraint: String,
    pub chain: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Ctx {
    tin: Lt,
    tout: Lt,
    tin_pos: bool,
    tout_pos: bool,
}

fn addr<T>(x: &T) -> usize {
    x as *const T as usize
}

fn describe(s: &Stmt) -> String {
    match s {
        Stmt::While(w) => format!("while ({})", pretty_expr(&w.guard)),
        Stmt::If(e, ..) => format!("if ({})", pretty_expr(e)),
        Stmt::For { var, .. } => format!("for {var}"),
        other => pretty_stmt(other),
    }
}

struct Gen<'a> {
    registry: &'a Registry,
    discipline: Discipline,
    names: Vec<String>,
    gamma: BTreeMap<String, usize>,
    loops: BTreeMap<LoopId, usize>,
    cons: Vec<Constraint>,
    forbids: Vec<Forbid>,
    expr_lt: HashMap<usize, Lt>,
    stmt_lt: HashMap<usize, Lt>,
    statement: String,
}

impl<'a> Gen<'a> {
    fn new(registry: &'a Registry, discipline: Discipline) -> Gen<'a> {
        Gen {
            registry,
            discipline,
            names: Vec::new(),
            gamma: BTreeMap::new(),
            loops: BTreeMap::new(),
            cons: Vec::new(),
            forbids: Vec::new(),
            expr_lt: HashMap::new(),
            stmt_lt: HashMap::new(),
            statement: String::new(),
        }
    }

    fn fresh(&mut self, name: String) -> usize {
        self.names.push(name);
        self.names.len() - 1
    }

    fn var(&mut self, x: &str) -> usize {
        if let Some(&i) = self.gamma.get(x) {
            return i;
        }
        let i = self.fresh(format!("Γ({x})"));
        self.gamma.insert(x.to_string(), i);
        i
    }

    fn push(&mut self, atom: Atom, rule: &str) {
        let origin = Origin { rule: rule.to_string(), statement: self.statement.clone() };
        self.cons.push(Constraint { atom, origin });
    }

    fn fail(&mut self, rule: &str, msg: String) {
        self.push(Atom::False(msg), rule);
    }

    fn name(&self, t: Lt) -> String {
        match t {
            Lt::Zero => "0".into(),
            Lt::U(i) => self.names[i].clone(),
            Lt::Inf => "inf".into(),
        }
    }

    /// `hi ≥ lo + k`.
    fn ge(&mut self, hi: Lt, lo: Lt, k: u32, rule: &str) {
        match (hi, lo) {
            (Lt::Inf, _) => {}
            (_, Lt::Inf) => {
                let msg = format!("{} would have to be inf", self.name(hi));
                self.fail(rule, msg)
            }
            (Lt::Zero, Lt::Zero) => {
                if k > 0 {
                    self.fail(rule, format!("0 ≥ 0 + {k}"))
                }
            }
            (Lt::Zero, Lt::U(v)) => {
                if k > 0 {
                    let msg = format!("0 ≥ {} + {k}", self.names[v]);
                    self.fail(rule, msg)
                } else {
                    self.push(Atom::Le { v, c: 0 }, rule)
                }
            }
            (Lt::U(h), Lt::Zero) => {
                if k > 0 {
                    self.push(Atom::Ge { hi: h, lo: None, k }, rule)
                }
            }
            (Lt::U(h), Lt::U(l)) => self.push(Atom::Ge { hi: h, lo: Some(l), k }, rule),
        }
    }

    fn eq(&mut self, a: Lt, b: Lt, rule: &str) {
        self.ge(a, b, 0, rule);
        self.ge(b, a, 0, rule);
    }

    fn le_const(&mut self, t: Lt, c: u32, rule: &str) {
        match t {
            Lt::Zero => {}
            Lt::U(v) => self.push(Atom::Le { v, c }, rule),
            Lt::Inf => self.fail(rule, format!("inf ≤ {c}")),
        }
    }

    fn op_constraints(&mut self, entry: &OperatorEntry, args: &[Lt], r: usize, c: Ctx) {
        let rule = format!("OP({})", entry.name);
        let so = self.discipline == Discipline::SecondOrder;
        let res = Lt::U(r);
        if so && entry.truncate {
            if args[0] != Lt::Inf {
                self.fail(&rule, "the first operand of truncate must be an oracle answer".into());
            }
            self.ge(args[1], c.tout, 0, &rule);
            self.ge(c.tin, res, 1, &rule);
        } else {
            if args.contains(&Lt::Inf) && !matches!(entry.class, OperatorClass::Polynomial { .. }) {
                self.fail(&rule, "an oracle answer reaches the operator".into());
            }
            match entry.class {
                OperatorClass::Neutral => args.iter().for_each(|&a| self.ge(a, res, 0, &rule)),
                OperatorClass::Positive { .. } => {
                    args.iter().for_each(|&a| self.ge(a, res, 0, &rule));
                    // With tin ≥ 1, `res < tin` subsumes `res = 0`.
                    if c.tin_pos {
                        self.ge(c.tin, res, 1, &rule);
                    } else {
                        self.le_const(res, 0, &rule);
                    }
                }
                OperatorClass::Polynomial { .. } => self.le_const(c.tout, 0, &rule),
            }
        }
        let name = entry.name.clone();
        let patterns: Vec<Vec<LevelPattern>> = self.registry.forbidden(&name).to_vec();
        let mut comps_all: Vec<Lt> = args.to_vec();
        comps_all.push(res);
        'pat: for pat in patterns {
            if pat.len() != comps_all.len() {
                continue;
            }
            let mut comps = Vec::new();
            for (&t, &p) in comps_all.iter().zip(&pat) {
                match (p, t) {
                    (LevelPattern::Any, _) => {}
                    (LevelPattern::Exactly(Level::Inf), Lt::Inf) => {}
                    (LevelPattern::Exactly(Level::Inf), _) | (LevelPattern::Exactly(Level::Fin(_)), Lt::Inf) => continue 'pat,
                    (LevelPattern::Exactly(Level::Fin(l)), Lt::Zero) => {
                        if l != 0 {
                            continue 'pat;
                        }
                    }
                    (LevelPattern::Exactly(Level::Fin(l)), Lt::U(v)) => comps.push((v, l)),
                }
            }
            let origin = Origin { rule: rule.clone(), statement: self.statement.clone() };
            if comps.is_empty() {
                self.fail(&rule, "the only available type is forbidden by the registry configuration".into());
            } else {
                self.forbids.push(Forbid { op: name.clone(), comps, origin });
            }
        }
    }

    fn expr(&mut self, e: &Expr, c: Ctx) -> Lt {
        let t = match e {
            Expr::Var(x) => Lt::U(self.var(x)),
            Expr::Lit(w) => {
                let entry = self.registry.literal_entry(w);
                let r = self.fresh(format!("level({})", pretty_expr(e)));
                self.op_constraints(&entry, &[], r, c);
                Lt::U(r)
            }
            Expr::Op(op, args) => {
                let ts: Vec<Lt> = args.iter().map(|a| self.expr(a, c)).collect();
                let r = self.fresh(format!("level({})", pretty_expr(e)));
                match self.registry.lookup(op) {
                    Some(entry) if entry.arity == args.len() => self.op_constraints(&entry, &ts, r, c),
                    _ => self.fail(&format!("OP({op})"), format!("unknown operator {op}/{}", args.len())),
                }
                Lt::U(r)
            }
            Expr::Declass(a, b) => {
                let t1 = self.expr(a, c);
                let t2 = self.expr(b, c);
                let d = Lt::U(self.fresh(format!("level({})", pretty_expr(e))));
                self.eq(t2, c.tout, "DCL");
                self.ge(d, t1, 0, "DCL");
                self.ge(c.tout, d, 0, "DCL");
                d
            }
            Expr::OracleCall(_, args) => {
                for a in args {
                    self.expr(a, c);
                }
                if self.discipline == Discipline::FirstOrder {
                    self.fail("ORC", "oracle call in a first-order program".into());
                }
                Lt::Inf
            }
        };
        self.expr_lt.insert(addr(e), t);
        t
    }

    fn stmt(&mut self, s: &Stmt, c: Ctx) -> Lt {
        let saved = std::mem::replace(&mut self.statement, describe(s));
        if matches!(s, Stmt::Seq(_)) {
            self.statement = saved.clone();
        }
        let so = self.discipline == Discipline::SecondOrder;
        let t = match s {
            Stmt::Skip => Lt::Zero,
            Stmt::Assign(x, e) => {
                let te = self.expr(e, c);
                let gx = Lt::U(self.var(x));
                if so && te == Lt::Inf {
                    self.fail("ASG", "an oracle answer is assigned without declass or truncate".into());
                }
                if c.tout_pos {
                    self.ge(te, gx, 0, "ASG");
                }
                gx
            }
            Stmt::Seq(items) => {
                let ts: Vec<Lt> = items.iter().map(|st| self.stmt(st, c)).collect();
                if ts.contains(&Lt::Inf) {
                    Lt::Inf
                } else {
                    let tau = Lt::U(self.fresh(format!("level(seq at {})", describe(&items[0]))));
                    for t in ts {
                        self.ge(tau, t, 0, "SEQ");
                    }
                    tau
                }
            }
            Stmt::If(e, a, b) => {
                let g = self.expr(e, c);
                let la = self.stmt(a, c);
                let lb = self.stmt(b, c);
                self.statement = describe(s);
                self.ge(g, la, 0, "CND");
                self.ge(g, lb, 0, "CND");
                g
            }
            Stmt::While(w) => {
                let rule = if c.tout_pos { "WH" } else { "WI" };
                let lam = Lt::U(self.fresh(format!("λ({})", w.id)));
                if let Lt::U(i) = lam {
                    self.loops.insert(w.id, i);
                }
                self.ge(lam, Lt::Zero, 1, rule);
                if c.tout_pos {
                    self.ge(c.tout, lam, 0, rule);
                } else if c.tin_pos {
                    self.fail(rule, "an outermost loop needs innermost level 0".into());
                }
                let inner = Ctx { tin: lam, tout: if c.tout_pos { c.tout } else { lam }, tin_pos: true, tout_pos: true };
                let g = self.expr(&w.guard, inner);
                self.eq(g, lam, rule);
                let body = self.stmt(&w.body, inner);
                self.statement = describe(s);
                self.ge(lam, body, 0, rule);
                lam
            }
            Stmt::Break(e) => {
                let g = self.expr(e, c);
                self.ge(g, c.tin, 0, "BRK");
                c.tin
            }
            Stmt::OracleBreak { args, guard_vars, .. } => {
                if !so {
                    self.fail("OBK", "oracle break in a first-order program".into());
                }
                for a in args {
                    self.expr(a, c);
                }
                for x in guard_vars {
                    let gx = Lt::U(self.var(x));
                    self.ge(gx, c.tout, 1, "OBK");
                }
                c.tin
            }
            Stmt::For { .. } => {
                self.fail("FOR", "for loops must be desugared first".into());
                Lt::Zero
            }
        };
        self.statement = saved;
        self.stmt_lt.insert(addr(s), t);
        t
    }

    fn describe_atom(&self, a: &Atom) -> String {
        match a {
            Atom::Ge { hi, lo: None, k } => format!("{} ≥ {k}", self.names[*hi]),
            Atom::Ge { hi, lo: Some(l), k: 0 } => format!("{} ≥ {}", self.names[*hi], self.names[*l]),
            Atom::Ge { hi, lo: Some(l), k } => format!("{} ≥ {} + {k}", self.names[*hi], self.names[*l]),
            Atom::Le { v, c } => format!("{} ≤ {c}", self.names[*v]),
            Atom::False(msg) => msg.clone(),
        }
    }

    fn describe_con(&self, c: &Constraint) -> String {
        format!("{} [{} at `{}`]", self.describe_atom(&c.atom), c.origin.rule, c.origin.statement)
    }

    /// Least solution of the constraints plus `extra`, by longest paths.
    fn solve(&self, extra: &[Constraint]) -> Result<Vec<u32>, Explanation> {
        let all: Vec<&Constraint> = self.cons.iter().chain(extra).collect();
        if let Some(c) = all.iter().find(|c| matches!(c.atom, Atom::False(_))) {
            return Err(Explanation {
                rule: c.origin.rule.clone(),
                statement: c.origin.statement.clone(),
                constraint: self.describe_atom(&c.atom),
                chain: vec![],
            });
        }
        let n = self.names.len();
        let mut val = vec![0u64; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let edges: Vec<(usize, Option<usize>, u32, usize)> = all
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c.atom {
                Atom::Ge { hi, lo, k } => Some((hi, lo, k, i)),
                _ => None,
            })
            .collect();
        let mut last_changed = None;
        for _round in 0..=n {
            last_changed = None;
            for &(hi, lo, k, ci) in &edges {
                let cand = lo.map_or(0, |l| val[l]) + k as u64;
                if cand > val[hi] {
                    val[hi] = cand;
                    pred[hi] = Some(ci);
                    last_changed = Some(hi);
                }
            }
            if last_changed.is_none() {
                break;
            }
        }
        if let Some(mut v) = last_changed {
            // Still relaxing after n rounds: walk back into the cycle.
            for _ in 0..n {
                v = match all[pred[v].unwrap()].atom {
                    Atom::Ge { lo: Some(l), .. } => l,
                    _ => v,
                };
            }
            let start = v;
            let mut cycle = Vec::new();
            loop {
                let ci = pred[v].unwrap();
                cycle.push(ci);
                v = match all[ci].atom {
                    Atom::Ge { lo: Some(l), .. } => l,
                    _ => break,
                };
                if v == start || cycle.len() > n {
                    break;
                }
            }
            cycle.reverse();
            let strict = cycle.iter().copied().find(|&ci| matches!(all[ci].atom, Atom::Ge { k, .. } if k > 0)).unwrap_or(cycle[0]);
            let desc: Vec<String> = cycle.iter().map(|&ci| self.describe_con(all[ci])).collect();
            return Err(Explanation {
                rule: all[strict].origin.rule.clone(),
                statement: all[strict].origin.statement.clone(),
                constraint: format!("levels must strictly increase around a cycle through {}", self.names[start]),
                chain: desc,
            });
        }
        for c in &all {
            if let Atom::Le { v, c: bound } = c.atom {
                if val[v] > bound as u64 {
                    let mut chain = Vec::new();
                    let mut cur = Some(v);
                    let mut strict = None;
                    let mut first = None;
                    while let Some(u) = cur {
                        let Some(ci) = pred[u] else { break };
                        if chain.len() > n {
                            break;
                        }
                        chain.push(self.describe_con(all[ci]));
                        first.get_or_insert(ci);
                        if let Atom::Ge { lo: Some(l), k, .. } = all[ci].atom {
                            if k > 0 && strict.is_none() {
                                strict = Some(ci);
                            }
                            cur = Some(l);
                        } else {
                            cur = None;
                        }
                    }
                    let blame = match (strict, c.origin.rule.as_str(), first) {
                        (Some(s), _, _) => all[s],
                        (None, "Γ", Some(f)) => all[f],
                        _ => c,
                    };
                    return Err(Explanation {
                        rule: blame.origin.rule.clone(),
                        statement: blame.origin.statement.clone(),
                        constraint: format!("{} but the least solution forces {}", self.describe_con(c), val[v]),
                        chain,
                    });
                }
            }
        }
        Ok(val.into_iter().map(|x| x as u32).collect())
    }

    /// Branches over the configured forbidden patterns: each one is avoided by
    /// moving one of its components above or below the forbidden level.
    fn search(&self, extra: &mut Vec<Constraint>, i: usize) -> Result<Vec<u32>, Explanation> {
        let sol = self.solve(extra)?;
        if i == self.forbids.len() {
            return Ok(sol);
        }
        let f = &self.forbids[i];
        let mut last = None;
        for &(v, l) in &f.comps {
            let mut options = vec![Atom::Ge { hi: v, lo: None, k: l + 1 }];
            if l > 0 {
                options.push(Atom::Le { v, c: l - 1 });
            }
            for atom in options {
                extra.push(Constraint { atom, origin: f.origin.clone() });
                match self.search(extra, i + 1) {
                    Ok(s) => return Ok(s),
                    Err(e) => last = Some(e),
                }
                extra.pop();
            }
        }
        let inner = last.map(|e| e.constraint).unwrap_or_default();
        Err(Explanation {
            rule: f.origin.rule.clone(),
            statement: f.origin.statement.clone(),
            constraint: format!("every remaining typing of {} uses a forbidden type", f.op),
            chain: vec![inner],
        })
    }

    fn value(&self, vals: &[u32], t: Lt) -> Level {
        match t {
            Lt::Zero => Level::ZERO,
            Lt::U(i) => Level::Fin(vals[i]),
            Lt::Inf => Level::Inf,
        }
    }

    fn judgment(&self, rule: Rule, subject: String, c: (u32, u32), level: Level, premises: Vec<Judgment>) -> Judgment {
        Judgment { rule, subject, tin: c.0, tout: c.1, level, premises }
    }

    fn build_expr(&self, vals: &[u32], e: &Expr, c: (u32, u32)) -> Judgment {
        let level = self.value(vals, self.expr_lt[&addr(e)]);
        let subject = pretty_expr(e);
        match e {
            Expr::Var(_) => self.judgment(Rule::Var, subject, c, level, vec![]),
            Expr::Lit(_) => self.judgment(Rule::Op, subject, c, level, vec![]),
            Expr::Op(_, args) => {
                let ps = args.iter().map(|a| self.build_expr(vals, a, c)).collect();
                self.judgment(Rule::Op, subject, c, level, ps)
            }
            Expr::Declass(a, b) => {
                let ps = vec![self.build_expr(vals, a, c), self.build_expr(vals, b, c)];
                self.judgment(Rule::Dcl, subject, c, level, ps)
            }
            Expr::OracleCall(_, args) => {
                let ps = args.iter().map(|a| self.build_expr(vals, a, c)).collect();
                self.judgment(Rule::Orc, subject, c, Level::Inf, ps)
            }
        }
    }

    fn build_stmt(&self, vals: &[u32], s: &Stmt, c: (u32, u32)) -> Judgment {
        let level = self.value(vals, self.stmt_lt[&addr(s)]);
        match s {
            Stmt::Skip => self.judgment(Rule::Skp, "skip".into(), c, Level::ZERO, vec![]),
            Stmt::Assign(_, e) => {
                let p = self.build_expr(vals, e, c);
                self.judgment(Rule::Asg, describe(s), c, level, vec![p])
            }
            Stmt::Seq(items) => self.build_seq(vals, items, c),
            Stmt::If(e, a, b) => {
                let ps = vec![self.build_expr(vals, e, c), self.build_stmt(vals, a, c), self.build_stmt(vals, b, c)];
                self.judgment(Rule::Cnd, describe(s), c, level, ps)
            }
            Stmt::While(w) => {
                let lam = vals[self.loops[&w.id]];
                let (rule, inner) = if c.1 == 0 { (Rule::Wi, (lam, lam)) } else { (Rule::Wh, (lam, c.1)) };
                let ps = vec![self.build_expr(vals, &w.guard, inner), self.build_stmt(vals, &w.body, inner)];
                self.judgment(rule, describe(s), c, Level::Fin(lam), ps)
            }
            Stmt::Break(e) => {
                let p = self.build_expr(vals, e, c);
                self.judgment(Rule::Brk, describe(s), c, Level::Fin(c.0), vec![p])
            }
            Stmt::OracleBreak { oracle, args, guard_vars } => {
                let left = Judgment {
                    rule: Rule::Orc,
                    subject: format!("{oracle}(…)"),
                    tin: c.0,
                    tout: c.1,
                    level: Level::Inf,
                    premises: args.iter().map(|a| self.build_expr(vals, a, c)).collect(),
                };
                let vars: Vec<Judgment> = guard_vars
                    .iter()
                    .map(|x| self.judgment(Rule::Var, x.clone(), c, Level::Fin(vals[self.gamma[x]]), vec![]))
                    .collect();
                let right = Judgment {
                    rule: Rule::Orc,
                    subject: format!("{oracle}({})", guard_vars.join(", ")),
                    tin: c.0,
                    tout: c.1,
                    level: Level::Inf,
                    premises: vars.clone(),
                };
                let mut ps = vec![left, right];
                ps.extend(vars);
                self.judgment(Rule::Obk, describe(s), c, Level::Fin(c.0), ps)
            }
            Stmt::For { .. } => unreachable!("rejected during generation"),
        }
    }

    fn build_seq(&self, vals: &[u32], items: &[Stmt], c: (u32, u32)) -> Judgment {
        if items.len() == 1 {
            return self.build_stmt(vals, &items[0], c);
        }
        let p0 = self.build_stmt(vals, &items[0], c);
        let p1 = self.build_seq(vals, &items[1..], c);
        let level = p0.level.join(p1.level);
        let subject = format!("{}; …", describe(&items[0]));
        self.judgment(Rule::Seq, subject, c, level, vec![p0, p1])
    }
}

/// A successful inference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Inference {
    pub gamma: VarTypeEnv,
    pub loop_levels: BTreeMap<LoopId, Level>,
    pub level: Level,
    pub derivation: TypingDerivation,
}

/// Infers Γ and a derivation of `Γ, Δ ⊢⁰₀ body : τ`. `vars` are typed even when
/// they do not occur in `body`; `fixed` pins some levels.
pub fn infer_body(
    registry: &Registry,
    discipline: Discipline,
    body: &Stmt,
    vars: &BTreeSet<String>,
    fixed: Option<&VarTypeEnv>,
) -> Result<Inference, Explanation> {
    infer_body_at(registry, discipline, body, vars, fixed, (0, 0))
}

/// [`infer_body`] under the judgment `⊢^tin_tout`.
pub fn infer_body_at(
    registry: &Registry,
    discipline: Discipline,
    body: &Stmt,
    vars: &BTreeSet<String>,
    fixed: Option<&VarTypeEnv>,
    (tin, tout): (u32, u32),
) -> Result<Inference, Explanation> {
    let mut g = Gen::new(registry, discipline);
    for x in vars {
        g.var(x);
    }
    let pinned = |g: &mut Gen, n: u32, name: &str| {
        if n == 0 {
            return Lt::Zero;
        }
        let v = g.fresh(name.to_string());
        g.push(Atom::Le { v, c: n }, "Γ");
        g.push(Atom::Ge { hi: v, lo: None, k: n }, "Γ");
        Lt::U(v)
    };
    let top = Ctx { tin: pinned(&mut g, tin, "τin"), tout: pinned(&mut g, tout, "τout"), tin_pos: tin > 0, tout_pos: tout > 0 };
    let root = g.stmt(body, top);
    if let Some(fixed) = fixed {
        g.statement = "Γ".into();
        for (x, l) in fixed.levels() {
            let v = g.var(x);
            match l {
                Level::Fin(n) => {
                    g.push(Atom::Le { v, c: *n }, "Γ");
                    if *n > 0 {
                        g.push(Atom::Ge { hi: v, lo: None, k: *n }, "Γ");
                    }
                }
                Level::Inf => g.fail("Γ", format!("Γ({x}) is inf")),
            }
        }
    }
    let vals = g.search(&mut Vec::new(), 0)?;
    let gamma = VarTypeEnv(g.gamma.iter().map(|(x, &i)| (x.clone(), Level::Fin(vals[i]))).collect());
    let loop_levels = g.loops.iter().map(|(id, &i)| (*id, Level::Fin(vals[i]))).collect();
    let derivation = g.build_stmt(&vals, body, (tin, tout));
    Ok(Inference { gamma, loop_levels, level: g.value(&vals, root), derivation })
}

pub fn infer_safety(p: &Program1) -> Result<Inference, Explanation> {
    infer_safety_with(builtins(), p)
}

pub fn infer_safety_with(registry: &Registry, p: &Program1) -> Result<Inference, Explanation> {
    infer_body(registry, Discipline::FirstOrder, &p.body, &p.variables(), None)
}

/// Whether a derivation exists for the given Γ.
pub fn typecheck_with_gamma(registry: &Registry, p: &Program1, gamma: &VarTypeEnv) -> Result<Inference, Explanation> {
    infer_body(registry, Discipline::FirstOrder, &p.body, &p.variables(), Some(gamma))
}

/// True iff every loop came from a `for`.
pub fn check_for_program(p: &Program1) -> bool {
    p.body.loops().iter().all(|w| w.from_for)
}

// ---------------------------------------------------------------------------
// Brute force

pub const BRUTE_FORCE_MAX_VARS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BruteForceError {
    #[error("{vars} variables exceed the brute-force limit of {BRUTE_FORCE_MAX_VARS}")]
    TooLarge { vars: usize },
}

struct Enumerated<'a> {
    registry: &'a Registry,
    gamma: &'a VarTypeEnv,
    lam: &'a HashMap<LoopId, u32>,
    max: u32,
}

impl Enumerated<'_> {
    fn levels(&self) -> impl Iterator<Item = u32> {
        0..=self.max
    }

    fn member(&self, op: &str, c: (u32, u32), cand: &[u32]) -> bool {
        let cand: Vec<Level> = cand.iter().map(|&l| Level::Fin(l)).collect();
        self.registry.delta_membership(op, Level::Fin(c.0), Level::Fin(c.1), &cand, Discipline::FirstOrder) == Ok(true)
    }

    /// Arguments levels realizing `op : args → r`, if any.
    fn op_witness(&self, op: &str, args: &[Expr], c: (u32, u32), r: u32) -> Option<Vec<u32>> {
        let sets: Vec<Vec<u32>> = args.iter().map(|a| self.expr_levels(a, c)).collect();
        let mut pick = vec![0usize; sets.len()];
        if sets.iter().any(Vec::is_empty) {
            return None;
        }
        loop {
            let mut cand: Vec<u32> = pick.iter().zip(&sets).map(|(&i, s)| s[i]).collect();
            cand.push(r);
            if self.member(op, c, &cand) {
                cand.pop();
                return Some(cand);
            }
            let mut k = 0;
            loop {
                if k == pick.len() {
                    return None;
                }
                pick[k] += 1;
                if pick[k] < sets[k].len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
        }
    }

    fn expr_levels(&self, e: &Expr, c: (u32, u32)) -> Vec<u32> {
        match e {
            Expr::Var(x) => self.gamma.get(x).and_then(Level::finite).into_iter().collect(),
            Expr::Lit(w) => {
                let name = literal_name(w);
                self.levels().filter(|&r| self.member(&name, c, &[r])).collect()
            }
            Expr::Op(op, args) => self.levels().filter(|&r| self.op_witness(op, args, c, r).is_some()).collect(),
            Expr::Declass(a, b) => {
                if !self.expr_levels(b, c).contains(&c.1) {
                    return vec![];
                }
                let lo = self.expr_levels(a, c).into_iter().min();
                match lo {
                    Some(lo) => (lo..=c.1.min(self.max)).collect(),
                    None => vec![],
                }
            }
            Expr::OracleCall(..) => vec![],
        }
    }

    fn build_expr(&self, e: &Expr, c: (u32, u32), level: u32) -> Judgment {
        let j = |rule, premises| Judgment { rule, subject: pretty_expr(e), tin: c.0, tout: c.1, level: Level::Fin(level), premises };
        match e {
            Expr::Var(_) | Expr::Lit(_) | Expr::OracleCall(..) => {
                j(if matches!(e, Expr::Var(_)) { Rule::Var } else { Rule::Op }, vec![])
            }
            Expr::Op(op, args) => {
                let w = self.op_witness(op, args, c, level).expect("level was derivable");
                j(Rule::Op, args.iter().zip(w).map(|(a, l)| self.build_expr(a, c, l)).collect())
            }
            Expr::Declass(a, b) => {
                let l1 = self.expr_levels(a, c).into_iter().min().expect("level was derivable");
                j(Rule::Dcl, vec![self.build_expr(a, c, l1), self.build_expr(b, c, c.1)])
            }
        }
    }

    /// Least level at which `s` is derivable (SUB then gives every level above).
    fn stmt_min(&self, s: &Stmt, c: (u32, u32)) -> Option<u32> {
        match s {
            Stmt::Skip => Some(0),
            Stmt::Assign(x, e) => {
                let gx = self.gamma.get(x)?.finite()?;
                let ls = self.expr_levels(e, c);
                let ok = if c.1 == 0 { !ls.is_empty() } else { ls.iter().any(|&l| gx <= l) };
                ok.then_some(gx)
            }
            Stmt::Seq(items) => items.iter().map(|st| self.stmt_min(st, c)).try_fold(0, |acc, m| m.map(|m| acc.max(m))),
            Stmt::If(e, a, b) => {
                let ma = self.stmt_min(a, c)?;
                let mb = self.stmt_min(b, c)?;
                self.expr_levels(e, c).into_iter().find(|&g| g >= ma && g >= mb)
            }
            Stmt::While(w) => {
                let lam = *self.lam.get(&w.id)?;
                let inner = if c.1 == 0 && c.0 == 0 {
                    (lam, lam)
                } else {
                    if lam > c.1 {
                        return None;
                    }
                    (lam, c.1)
                };
                if lam < 1 || !self.expr_levels(&w.guard, inner).contains(&lam) {
                    return None;
                }
                (self.stmt_min(&w.body, inner)? <= lam).then_some(lam)
            }
            Stmt::Break(e) => self.expr_levels(e, c).iter().any(|&g| g >= c.0).then_some(c.0),
            Stmt::OracleBreak { .. } | Stmt::For { .. } => None,
        }
    }

    fn build_stmt(&self, s: &Stmt, c: (u32, u32)) -> Judgment {
        let level = self.stmt_min(s, c).expect("statement was derivable");
        let j = |rule, premises| Judgment { rule, subject: describe(s), tin: c.0, tout: c.1, level: Level::Fin(level), premises };
        match s {
            Stmt::Skip => j(Rule::Skp, vec![]),
            Stmt::Assign(_, e) => {
                let ls = self.expr_levels(e, c);
                let l = if c.1 == 0 { ls[0] } else { *ls.iter().find(|&&l| level <= l).unwrap() };
                j(Rule::Asg, vec![self.build_expr(e, c, l)])
            }
            Stmt::Seq(items) => self.build_seq(items, c),
            Stmt::If(e, a, b) => j(Rule::Cnd, vec![self.build_expr(e, c, level), self.build_stmt(a, c), self.build_stmt(b, c)]),
            Stmt::While(w) => {
                let (rule, inner) = if c.1 == 0 { (Rule::Wi, (level, level)) } else { (Rule::Wh, (level, c.1)) };
                j(rule, vec![self.build_expr(&w.guard, inner, level), self.build_stmt(&w.body, inner)])
            }
            Stmt::Break(e) => {
                let g = *self.expr_levels(e, c).iter().find(|&&g| g >= c.0).unwrap();
                j(Rule::Brk, vec![self.build_expr(e, c, g)])
            }
            Stmt::OracleBreak { .. } | Stmt::For { .. } => unreachable!(),
        }
    }

    fn build_seq(&self, items: &[Stmt], c: (u32, u32)) -> Judgment {
        if items.len() == 1 {
            return self.build_stmt(&items[0], c);
        }
        let p0 = self.build_stmt(&items[0], c);
        let p1 = self.build_seq(&items[1..], c);
        Judgment {
            rule: Rule::Seq,
            subject: format!("{}; …", describe(&items[0])),
            tin: c.0,
            tout: c.1,
            level: p0.level.join(p1.level),
            premises: vec![p0, p1],
        }
    }
}

fn odometer(digits: &mut [u32], lo: u32, hi: u32) -> bool {
    for d in digits.iter_mut() {
        if *d < hi {
            *d += 1;
            return true;
        }
        *d = lo;
    }
    false
}

/// Exhaustive search over Γ and loop levels in `0..=max_level`, returning the
/// first environment whose reconstructed derivation passes [`check_derivation`].
pub fn brute_force_witness(
    registry: &Registry,
    p: &Program1,
    max_level: u32,
) -> Result<Option<(VarTypeEnv, TypingDerivation)>, BruteForceError> {
    let vars: Vec<String> = p.variables().into_iter().collect();
    if vars.len() > BRUTE_FORCE_MAX_VARS {
        return Err(BruteForceError::TooLarge { vars: vars.len() });
    }
    let loops: Vec<LoopId> = p.body.loops().iter().map(|w| w.id).collect();
    if max_level == 0 && !loops.is_empty() {
        return Ok(None);
    }
    let mut gl = vec![0u32; vars.len()];
    loop {
        let gamma = VarTypeEnv::finite(vars.iter().map(String::as_str).zip(gl.iter().copied()));
        let mut ll = vec![1u32; loops.len()];
        loop {
            let lam: HashMap<LoopId, u32> = loops.iter().copied().zip(ll.iter().copied()).collect();
            let en = Enumerated { registry, gamma: &gamma, lam: &lam, max: max_level };
            if en.stmt_min(&p.body, (0, 0)).is_some() {
                let d = en.build_stmt(&p.body, (0, 0));
                if check_derivation_with(registry, p, &gamma, &d).is_ok() {
                    return Ok(Some((gamma, d)));
                }
            }
            if !odometer(&mut ll, 1, max_level) {
                break;
            }
        }
        if !odometer(&mut gl, 0, max_level) {
            return Ok(None);
        }
    }
}

pub fn brute_force_safe(p: &Program1, max_level: u32) -> Result<bool, BruteForceError> {
    brute_force_witness(builtins(), p, max_level).map(|w| w.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program1;

    const INC_LOOP: &str = "prog(x){ while (x > u0) { x := x + u1 } return x }";
    const EXP2: &str = "prog(y){ x := true; while (x) { y := decb(y); x := declass(y, u1) } return y }";

    #[test]
    fn undeclassified_examples() {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(undeclassified_vars(&Expr::var("x")), set(&["x"]));
        assert_eq!(undeclassified_vars(&Expr::declass(Expr::var("y"), Expr::var("z"))), set(&["z"]));
        let e = Expr::op("and", vec![Expr::var("x"), Expr::declass(Expr::var("y"), Expr::var("z"))]);
        assert_eq!(undeclassified_vars(&e), set(&["x", "z"]));
    }

    #[test]
    fn inferred_derivations_check() {
        for src in [INC_LOOP.replace("x + u1", "x - u1").as_str(), EXP2, "prog(x){ y := x + u1 return y }", "prog(x){ skip return x }"] {
            let p = parse_program1(src).unwrap();
            let inf = infer_safety(&p).unwrap_or_else(|e| panic!("{src}: {e}"));
            check_derivation_with(builtins(), &p, &inf.gamma, &inf.derivation).unwrap();
        }
    }

    #[test]
    fn exp2_levels() {
        let inf = infer_safety(&parse_program1(EXP2).unwrap()).unwrap();
        assert_eq!(inf.gamma.get("x"), Some(Level::Fin(1)));
        assert_eq!(inf.gamma.get("y"), Some(Level::Fin(0)));
    }

    #[test]
    fn increment_loop_is_unsafe() {
        let p = parse_program1(INC_LOOP).unwrap();
        let e = infer_safety(&p).unwrap_err();
        assert_eq!(e.rule, "OP(+)");
        assert_eq!(brute_force_safe(&p, 3), Ok(false));
    }

    #[test]
    fn brute_force_trivial() {
        assert_eq!(brute_force_safe(&parse_program1("prog(x){ skip return x }").unwrap(), 2), Ok(true));
    }

    #[test]
    fn too_many_vars() {
        let p = parse_program1("prog(a, b, c, d, e, f, g){ skip return a }").unwrap();
        assert_eq!(brute_force_safe(&p, 1), Err(BruteForceError::TooLarge { vars: 7 }));
    }

    #[test]
    fn polynomial_in_loop_rejected() {
        let p = parse_program1("prog(x, y){ while (x > u0) { y := cons(y, y); x := x - u1 } return y }").unwrap();
        assert_eq!(infer_safety(&p).unwrap_err().rule, "OP(cons)");
    }

    #[test]
    fn for_programs() {
        assert!(check_for_program(&parse_program1("prog(x){ skip return x }").unwrap()));
        assert!(check_for_program(&parse_program1("prog(x, y){ for i = x to y { skip } return x }").unwrap()));
        assert!(!check_for_program(&parse_program1(EXP2).unwrap()));
    }
}
