//! Big-step evaluator for first-order programs, with step accounting and the
//! aperiodicity monitor.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{Expr, LoopId, Program1, Stmt, While};
use crate::opreg::{builtins, Registry};
use crate::safety1::undeclassified_vars;
use crate::word::Word;

pub const DEFAULT_BUDGET: u64 = 10_000_000;
pub const BUDGET_ENV: &str = "TIERLANG_MAX_STEPS";

/// Default budget, overridden by `TIERLANG_MAX_STEPS` when it holds a number.
pub fn budget_from_env() -> u64 {
    std::env::var(BUDGET_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_BUDGET)
}

/// Total store: unbound variables read as ε.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Store1 {
    words: HashMap<String, Word>,
    size: usize,
}

static EMPTY: Word = Word::EMPTY;

impl Store1 {
    pub fn new() -> Store1 {
        Store1::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Word)>) -> Store1 {
        let mut s = Store1::new();
        for (x, w) in pairs {
            s.set(x, w);
        }
        s
    }

    pub fn get(&self, x: &str) -> &Word {
        self.words.get(x).unwrap_or(&EMPTY)
    }

    pub fn set(&mut self, x: &str, w: Word) {
        self.size += w.len();
        if let Some(old) = self.words.insert(x.to_string(), w) {
            self.size -= old.len();
        }
    }

    /// Sum of the lengths of all stored words.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Bound variables in name order (variables at ε are included if they were set).
    pub fn bindings(&self) -> BTreeMap<String, Word> {
        self.words.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn project(&self, vars: &[String]) -> Vec<Word> {
        vars.iter().map(|x| self.get(x).clone()).collect()
    }

    /// Pointwise equality on `vars`.
    pub fn equiv_on(&self, other: &Store1, vars: &[String]) -> bool {
        vars.iter().all(|x| self.get(x) == other.get(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Flag {
    Normal,
    Break,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecStats {
    pub steps: u64,
    pub iterations: BTreeMap<LoopId, u64>,
    pub max_store_size: usize,
    pub oracle_calls: u64,
    /// Oracle answers after a passed size break that were larger than the activation's reference answer.
    pub flr_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub loop_id: LoopId,
    /// 1-based index of the guard evaluation inside the activation.
    pub iteration: u64,
    pub projection: BTreeMap<String, Word>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "loop {} re-entered at guard evaluation {} under an equivalent store {{", self.loop_id, self.iteration)?;
        for (i, (x, w)) in self.projection.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x} = {w:?}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind")]
pub enum RuntimeStop {
    #[error("step budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },
    #[error("aperiodicity violation: {0}")]
    AperiodicityViolation(Violation),
    #[error("break reached the top level")]
    TopLevelBreak,
    #[error("unknown operator {name}")]
    UnknownOperator { name: String },
    #[error("oracle failure: {message}")]
    OracleFailure { message: String },
}

impl RuntimeStop {
    pub fn subcode(&self) -> &'static str {
        match self {
            RuntimeStop::BudgetExhausted { .. } => "BudgetExhausted",
            RuntimeStop::AperiodicityViolation(_) => "AperiodicityViolation",
            RuntimeStop::TopLevelBreak => "TopLevelBreak",
            RuntimeStop::UnknownOperator { .. } => "UnknownOperator",
            RuntimeStop::OracleFailure { .. } => "OracleFailure",
        }
    }
}

/// Monitor state of one loop activation.
#[derive(Debug, Clone)]
pub struct LoopMonitorState {
    pub loop_id: LoopId,
    pub vars: Vec<String>,
    seen: HashSet<Vec<Word>>,
    evaluations: u64,
}

impl LoopMonitorState {
    pub fn new(loop_id: LoopId, guard: &Expr) -> LoopMonitorState {
        LoopMonitorState {
            loop_id,
            vars: undeclassified_vars(guard).into_iter().collect(),
            seen: HashSet::new(),
            evaluations: 0,
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

/// Records the guard-relevant projection of `store`; a repeat within the activation is a violation.
pub fn monitor_guard(state: &mut LoopMonitorState, store: &Store1) -> Result<(), Violation> {
    state.evaluations += 1;
    let proj = store.project(&state.vars);
    if state.seen.contains(&proj) {
        return Err(Violation {
            loop_id: state.loop_id,
            iteration: state.evaluations,
            projection: state.vars.iter().cloned().zip(proj).collect(),
        });
    }
    state.seen.insert(proj);
    Ok(())
}

/// Resolution of oracle calls. First-order programs use [`NoOracles`].
pub trait OracleEnv {
    fn call(&self, m: &mut Machine, store: &Store1, oracle: &str, args: &[Word]) -> Result<Word, RuntimeStop>;
}

pub struct NoOracles;

impl OracleEnv for NoOracles {
    fn call(&self, _: &mut Machine, _: &Store1, oracle: &str, _: &[Word]) -> Result<Word, RuntimeStop> {
        Err(RuntimeStop::OracleFailure { message: format!("no oracle bound to {oracle} in a first-order run") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    pub budget: u64,
    pub monitor: bool,
}

impl Default for ExecConfig {
    fn default() -> ExecConfig {
        ExecConfig { budget: DEFAULT_BUDGET, monitor: false }
    }
}

/// Evaluation state shared by every frame of one run.
pub struct Machine<'r> {
    pub registry: &'r Registry,
    pub config: ExecConfig,
    pub stats: ExecStats,
    /// Per `while` activation: reference answer length of each size break.
    flr: Vec<HashMap<*const Stmt, usize>>,
}

impl<'r> Machine<'r> {
    pub fn new(registry: &'r Registry, config: ExecConfig) -> Machine<'r> {
        Machine { registry, config, stats: ExecStats::default(), flr: Vec::new() }
    }

    /// One rule application.
    pub fn tick(&mut self) -> Result<(), RuntimeStop> {
        self.stats.steps += 1;
        if self.stats.steps > self.config.budget {
            return Err(RuntimeStop::BudgetExhausted { budget: self.config.budget });
        }
        Ok(())
    }

    pub fn eval(&mut self, store: &Store1, e: &Expr, env: &dyn OracleEnv) -> Result<Word, RuntimeStop> {
        self.tick()?;
        match e {
            Expr::Var(x) => Ok(store.get(x).clone()),
            Expr::Lit(w) => Ok(w.clone()),
            Expr::Op(op, args) => {
                let vals = args.iter().map(|a| self.eval(store, a, env)).collect::<Result<Vec<_>, _>>()?;
                self.registry.apply(op, &vals).map_err(|_| RuntimeStop::UnknownOperator { name: op.clone() })
            }
            Expr::Declass(a, b) => {
                let wa = self.eval(store, a, env)?;
                let wb = self.eval(store, b, env)?;
                Ok(Word::ones(wa.len().min(wb.len())))
            }
            Expr::OracleCall(x, args) => {
                let vals = args.iter().map(|a| self.eval(store, a, env)).collect::<Result<Vec<_>, _>>()?;
                self.stats.oracle_calls += 1;
                env.call(self, store, x, &vals)
            }
        }
    }

    pub fn exec(&mut self, store: &mut Store1, s: &Stmt, env: &dyn OracleEnv) -> Result<Flag, RuntimeStop> {
        match s {
            Stmt::Skip => {
                self.tick()?;
                Ok(Flag::Normal)
            }
            Stmt::Assign(x, e) => {
                self.tick()?;
                let w = self.eval(store, e, env)?;
                store.set(x, w);
                self.stats.max_store_size = self.stats.max_store_size.max(store.size());
                Ok(Flag::Normal)
            }
            Stmt::Seq(items) => {
                let (last, init) = items.split_last().expect("sequences are non-empty");
                for st in init {
                    self.tick()?;
                    if self.exec(store, st, env)? == Flag::Break {
                        return Ok(Flag::Break);
                    }
                }
                self.exec(store, last, env)
            }
            Stmt::If(e, a, b) => {
                self.tick()?;
                if self.eval(store, e, env)?.truthy() {
                    self.exec(store, a, env)
                } else {
                    self.exec(store, b, env)
                }
            }
            Stmt::While(w) => self.exec_while(store, w, env),
            Stmt::Break(e) => {
                self.tick()?;
                Ok(if self.eval(store, e, env)?.truthy() { Flag::Break } else { Flag::Normal })
            }
            Stmt::OracleBreak { oracle, args, guard_vars } => {
                self.tick()?;
                let left = self.eval(store, &Expr::OracleCall(oracle.clone(), args.clone()), env)?;
                let refs = guard_vars.iter().map(|x| Expr::Var(x.clone())).collect();
                let right = self.eval(store, &Expr::OracleCall(oracle.clone(), refs), env)?;
                if left.len() > right.len() {
                    return Ok(Flag::Break);
                }
                if let Some(refs) = self.flr.last_mut() {
                    let reference = *refs.entry(s as *const Stmt).or_insert(right.len());
                    if left.len() > reference {
                        self.stats.flr_violations += 1;
                    }
                }
                Ok(Flag::Normal)
            }
            Stmt::For { .. } => panic!("for loops must be desugared before evaluation"),
        }
    }

    /// One activation. Each iteration materializes `while`, the guard, and one
    /// sequence node per body statement (`s1; …; sk; while`).
    fn exec_while(&mut self, store: &mut Store1, w: &While, env: &dyn OracleEnv) -> Result<Flag, RuntimeStop> {
        self.flr.push(HashMap::new());
        let out = self.activation(store, w, env);
        self.flr.pop();
        out
    }

    fn activation(&mut self, store: &mut Store1, w: &While, env: &dyn OracleEnv) -> Result<Flag, RuntimeStop> {
        let mut monitor = self.config.monitor.then(|| LoopMonitorState::new(w.id, &w.guard));
        loop {
            self.tick()?;
            if let Some(m) = monitor.as_mut() {
                monitor_guard(m, store).map_err(RuntimeStop::AperiodicityViolation)?;
            }
            if !self.eval(store, &w.guard, env)?.truthy() {
                return Ok(Flag::Normal);
            }
            *self.stats.iterations.entry(w.id).or_insert(0) += 1;
            for st in w.body.as_list() {
                self.tick()?;
                if self.exec(store, st, env)? == Flag::Break {
                    return Ok(Flag::Normal);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutcome {
    pub flag: Flag,
    pub store: Store1,
    pub stats: ExecStats,
}

pub fn eval_expr(store: &Store1, e: &Expr) -> Result<Word, RuntimeStop> {
    let mut m = Machine::new(builtins(), ExecConfig { budget: u64::MAX, monitor: false });
    m.eval(store, e, &NoOracles)
}

pub fn exec_stmt(store: Store1, s: &Stmt, config: ExecConfig) -> Result<ExecOutcome, RuntimeStop> {
    exec_stmt_with(builtins(), store, s, config)
}

pub fn exec_stmt_with(registry: &Registry, mut store: Store1, s: &Stmt, config: ExecConfig) -> Result<ExecOutcome, RuntimeStop> {
    let mut m = Machine::new(registry, config);
    let flag = m.exec(&mut store, s, &NoOracles)?;
    Ok(ExecOutcome { flag, store, stats: m.stats })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub value: Word,
    pub store: Store1,
    pub stats: ExecStats,
}

/// Runs `p` from the store binding its parameters to `inputs`.
pub fn run_program(p: &Program1, inputs: &[Word], config: ExecConfig) -> Result<RunResult, RuntimeStop> {
    run_program_with(builtins(), p, inputs, config).map_err(|(stop, _)| stop)
}

/// Like [`run_program`], but also returns the statistics gathered before a stop.
pub fn run_program_with(
    registry: &Registry,
    p: &Program1,
    inputs: &[Word],
    config: ExecConfig,
) -> Result<RunResult, (RuntimeStop, ExecStats)> {
    assert_eq!(inputs.len(), p.params.len(), "one input per parameter");
    let mut store = Store1::new();
    for (x, w) in p.params.iter().zip(inputs) {
        store.set(x, w.clone());
    }
    let mut m = Machine::new(registry, config);
    m.stats.max_store_size = store.size();
    match m.exec(&mut store, &p.body, &NoOracles) {
        Ok(Flag::Normal) => Ok(RunResult { value: store.get(&p.ret).clone(), store, stats: m.stats }),
        Ok(Flag::Break) => Err((RuntimeStop::TopLevelBreak, m.stats)),
        Err(stop) => Err((stop, m.stats)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program1;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn run(src: &str, inputs: &[&str], monitor: bool) -> Result<RunResult, RuntimeStop> {
        let p = parse_program1(src).unwrap();
        let inputs: Vec<Word> = inputs.iter().map(|s| w(s)).collect();
        run_program(&p, &inputs, ExecConfig { budget: 100_000, monitor })
    }

    #[test]
    fn declass_is_unary_min() {
        let store = Store1::from_pairs([("y", w("0101")), ("z", w("11"))]);
        assert_eq!(eval_expr(&store, &Expr::declass(Expr::var("y"), Expr::var("z"))).unwrap(), w("11"));
        assert_eq!(eval_expr(&store, &Expr::declass(Expr::Lit(Word::empty()), Expr::var("z"))).unwrap(), Word::empty());
    }

    #[test]
    fn unbound_reads_empty() {
        assert_eq!(Store1::new().get("nope"), &Word::empty());
    }

    #[test]
    fn break_inside_while_is_contained() {
        let p = parse_program1("prog(x){ while (x) { break(x) } return x }").unwrap();
        let out = exec_stmt(Store1::from_pairs([("x", w("1"))]), &p.body, ExecConfig::default()).unwrap();
        assert_eq!(out.flag, Flag::Normal);
        let out = exec_stmt(Store1::from_pairs([("x", w("1"))]), &Stmt::Break(Expr::var("x")), ExecConfig::default()).unwrap();
        assert_eq!(out.flag, Flag::Break);
    }

    #[test]
    fn identity_and_copy() {
        assert_eq!(run("prog(x){ skip return x }", &["01"], false).unwrap().value, w("01"));
        assert_eq!(run("prog(x){ y := x return y }", &["0#1"], false).unwrap().value, w("0#1"));
    }

    #[test]
    fn step_counts_follow_tree_size() {
        // skip: 1 node.
        assert_eq!(run("prog(x){ skip return x }", &[""], false).unwrap().stats.steps, 1);
        // seq + assign(x) + var + skip.
        assert_eq!(run("prog(x){ y := x; skip return x }", &[""], false).unwrap().stats.steps, 4);
        // while(false): while node + literal.
        assert_eq!(run("prog(x){ while (false) { skip } return x }", &[""], false).unwrap().stats.steps, 2);
    }

    #[test]
    fn exp2_is_flagged_at_second_guard() {
        let src = "prog(y){ x := true; while (x) { y := decb(y); x := declass(y, u1) } return y }";
        match run(src, &["100"], true) {
            Err(RuntimeStop::AperiodicityViolation(v)) => {
                assert_eq!(v.iteration, 2);
                assert_eq!(v.projection.get("x"), Some(&w("1")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn top_level_break_stops() {
        assert_eq!(run("prog(x){ break(true) return x }", &[""], false).unwrap_err(), RuntimeStop::TopLevelBreak);
    }

    #[test]
    fn budget_is_enforced() {
        let p = parse_program1("prog(x){ while (true) { skip } return x }").unwrap();
        let r = run_program(&p, &[Word::empty()], ExecConfig { budget: 50, monitor: false });
        assert_eq!(r.unwrap_err(), RuntimeStop::BudgetExhausted { budget: 50 });
    }
}
