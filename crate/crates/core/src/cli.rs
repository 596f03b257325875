//! Command-line front end. Every command produces a [`Report`]; the exit code
//! is computed from the report alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::ast::{Level, Program, Program1, Program2};
use crate::interp1::{budget_from_env, run_program_with, ExecConfig, ExecStats, RuntimeStop};
use crate::opreg::{builtin_registry, validate_class, Registry, RegistryConfig, ValidationReport};
use crate::parser::{parse_with_map, pretty_print, SourceMap};
use crate::safety1::{check_for_program, infer_body, Explanation};
use crate::opreg::Discipline;
use crate::secondorder::{embed_program1, eval_program2_with, infer_safety2_with, Oracle, OracleKind, SecondOrderError};
use crate::word::Word;

#[derive(Debug, Parser)]
#[command(name = "tierlang", version, about = "Level-based complexity checker and interpreter")]
pub struct Cli {
    /// Print the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Infer a typing, or explain why none exists.
    Check {
        file: PathBuf,
        #[arg(long)]
        second_order: bool,
        /// JSON file restricting the operator typing environment.
        #[arg(long, value_name = "CONFIG")]
        delta: Option<PathBuf>,
    },
    /// Evaluate a program.
    Run {
        file: PathBuf,
        #[arg(long)]
        second_order: bool,
        /// Input word, `name=word`.
        #[arg(long = "input", value_name = "NAME=WORD")]
        inputs: Vec<String>,
        /// Oracle binding, `X=builtin:append1`, `X=builtin:const:W` or `X=prog:PATH`.
        #[arg(long = "oracle", value_name = "NAME=SPEC")]
        oracles: Vec<String>,
        #[arg(long, value_name = "N")]
        max_steps: Option<u64>,
        /// Stop on the first aperiodicity violation.
        #[arg(long)]
        monitor: bool,
    },
    /// Accept iff the program is safe and every loop is a `for`.
    Forcheck {
        file: PathBuf,
        #[arg(long, value_name = "CONFIG")]
        delta: Option<PathBuf>,
    },
    /// List the operator registry.
    Ops {
        /// Check each declared class on N random samples.
        #[arg(long, value_name = "N")]
        validate: Option<usize>,
        #[arg(long, value_name = "CONFIG")]
        delta: Option<PathBuf>,
    },
    /// Print the program with `for` loops rewritten.
    Desugar { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Io,
    Parse,
    Usage,
    WellFormed,
    Guardedness,
    SimpleType,
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorInfo {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcode: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    pub parse: Option<bool>,
    pub guarded: Option<bool>,
    pub simple_type: Option<bool>,
    pub safety: Option<bool>,
    pub aperiodicity: Option<bool>,
    pub for_program: Option<bool>,
    pub validation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcedureReport {
    pub gamma: BTreeMap<String, Level>,
    pub level: Level,
    pub tin: u32,
    pub tout: u32,
    pub loop_levels: BTreeMap<String, Level>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub steps: u64,
    /// Iterations per loop, keyed `L<id>` or `L<id>@<line>`.
    pub iterations: BTreeMap<String, u64>,
    pub max_store_size: usize,
    pub oracle_calls: u64,
    pub flr_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViolationReport {
    pub loop_id: u32,
    pub line: Option<usize>,
    pub iteration: u64,
    pub projection: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OperatorReport {
    pub name: String,
    pub symbol: String,
    pub arity: usize,
    pub class: String,
    pub truncate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub command: String,
    pub file: Option<String>,
    pub pipeline: Option<String>,
    pub verdicts: Verdicts,
    pub gamma: Option<BTreeMap<String, Level>>,
    pub loop_levels: Option<BTreeMap<String, Level>>,
    pub omega: Option<BTreeMap<String, ProcedureReport>>,
    pub program_type: Option<String>,
    pub explanation: Option<Explanation>,
    pub unsafe_procedure: Option<String>,
    pub result: Option<String>,
    pub stats: Option<StatsReport>,
    pub violation: Option<ViolationReport>,
    pub operators: Option<Vec<OperatorReport>>,
    pub validation: Option<Vec<ValidationReport>>,
    pub desugared: Option<String>,
    pub error: Option<ErrorInfo>,
    pub warnings: Vec<String>,
}

impl Report {
    fn new(command: &str, file: Option<&Path>) -> Report {
        Report { command: command.into(), file: file.map(|f| f.display().to_string()), ..Report::default() }
    }

    fn fail(mut self, kind: ErrorKind, message: impl Into<String>) -> Report {
        match kind {
            ErrorKind::Parse => self.verdicts.parse = Some(false),
            ErrorKind::WellFormed | ErrorKind::Guardedness => self.verdicts.guarded = Some(false),
            ErrorKind::SimpleType => self.verdicts.simple_type = Some(false),
            _ => {}
        }
        self.error = Some(ErrorInfo { kind, message: message.into(), subcode: None });
        self
    }

    /// 0 safe / value, 1 unsafe or rejected, 2 malformed input, 3 runtime stop, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        if let Some(e) = &self.error {
            return match e.kind {
                ErrorKind::Io => 4,
                ErrorKind::Runtime => 3,
                ErrorKind::Parse | ErrorKind::Usage | ErrorKind::WellFormed | ErrorKind::Guardedness | ErrorKind::SimpleType => 2,
            };
        }
        let v = &self.verdicts;
        if [v.safety, v.for_program, v.validation].contains(&Some(false)) {
            1
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(ops) = &self.operators {
            for op in ops {
                let _ = writeln!(out, "{:<12} {:<6} arity {}  {}{}", op.name, op.symbol, op.arity, op.class, if op.truncate { "  truncate" } else { "" });
            }
            let _ = writeln!(out, "{} operators", ops.len());
        }
        if let Some(vals) = &self.validation {
            let bad: usize = vals.iter().map(|v| v.counterexamples.len()).sum();
            for v in vals.iter().filter(|v| !v.counterexamples.is_empty()) {
                let _ = writeln!(out, "{}: {} counterexamples to {}", v.op, v.counterexamples.len(), v.class);
            }
            let _ = writeln!(out, "validation: {bad} counterexamples");
        }
        if let Some(d) = &self.desugared {
            let _ = writeln!(out, "{d}");
        }
        if let Some(e) = &self.error {
            let _ = writeln!(out, "error: {}", e.message);
        }
        match self.verdicts.safety {
            Some(true) => {
                let _ = writeln!(out, "safe");
            }
            Some(false) => {
                if let Some(ex) = &self.explanation {
                    let at = self.unsafe_procedure.as_ref().map(|p| format!(" (procedure {p})")).unwrap_or_default();
                    let _ = writeln!(out, "unsafe{at}: {ex}");
                    for step in &ex.chain {
                        let _ = writeln!(out, "  {step}");
                    }
                } else {
                    let _ = writeln!(out, "unsafe");
                }
            }
            None => {}
        }
        if self.command == "forcheck" {
            if let Some(f) = self.verdicts.for_program {
                let _ = writeln!(out, "for-program: {}", if f { "yes" } else { "no" });
            }
        }
        let levels = |out: &mut String, name: &str, m: &BTreeMap<String, Level>| {
            let items: Vec<String> = m.iter().map(|(x, l)| format!("{x}: {l}")).collect();
            let _ = writeln!(out, "{name} = {{{}}}", items.join(", "));
        };
        if let Some(g) = &self.gamma {
            levels(&mut out, "Γ", g);
        }
        if let Some(l) = &self.loop_levels {
            if !l.is_empty() {
                levels(&mut out, "loops", l);
            }
        }
        if let Some(t) = &self.program_type {
            let _ = writeln!(out, "type: {t}");
        }
        if let Some(omega) = &self.omega {
            for (p, t) in omega {
                levels(&mut out, &format!("Ω({p}) at ({}, {}), level {}, Γ", t.tin, t.tout, t.level), &t.gamma);
            }
        }
        if let Some(r) = &self.result {
            let _ = writeln!(out, "result: {}", if r.is_empty() { "eps" } else { r });
        }
        if let Some(v) = &self.violation {
            let line = v.line.map(|l| format!(" (line {l})")).unwrap_or_default();
            let _ = writeln!(out, "aperiodicity violation: loop L{}{line}, guard evaluation {}", v.loop_id, v.iteration);
        }
        if let Some(s) = &self.stats {
            let _ = writeln!(out, "steps: {}", s.steps);
            for (l, n) in &s.iterations {
                let _ = writeln!(out, "  {l}: {n} iterations");
            }
            if s.oracle_calls > 0 {
                let _ = writeln!(out, "oracle calls: {}", s.oracle_calls);
            }
        }
        if let Some(a) = self.verdicts.aperiodicity {
            let _ = writeln!(out, "aperiodicity: {}", if a { "ok" } else { "violated" });
        }
        out
    }
}

fn stats_report(stats: &ExecStats, map: &SourceMap) -> StatsReport {
    StatsReport {
        steps: stats.steps,
        iterations: stats
            .iterations
            .iter()
            .map(|(id, n)| (map.line_of(*id).map(|l| format!("{id}@{l}")).unwrap_or_else(|| id.to_string()), *n))
            .collect(),
        max_store_size: stats.max_store_size,
        oracle_calls: stats.oracle_calls,
        flr_violations: stats.flr_violations,
    }
}

// Parsed source with the pipeline it is run through.
enum Loaded {
    First(Program1),
    Second(Program2),
}

fn load(report: Report, file: &Path, second_order: bool, raw: bool) -> Result<(Report, Loaded, SourceMap), Report> {
    let mut report = report;
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => return Err(report.fail(ErrorKind::Io, format!("{}: {e}", file.display()))),
    };
    let want_second = second_order || file.extension().is_some_and(|e| e == "tl2");
    let parsed = match parse_with_map(&text, raw) {
        Ok(p) => p,
        Err(e) => return Err(report.fail(ErrorKind::Parse, e.to_string())),
    };
    report.verdicts.parse = Some(true);
    let loaded = match (parsed.program, want_second) {
        (Program::First(p), false) => Loaded::First(p),
        (Program::First(p), true) => Loaded::Second(embed_program1(&p)),
        (Program::Second(p), true) => Loaded::Second(p),
        (Program::Second(_), false) => {
            return Err(report.fail(ErrorKind::Parse, "second-order program in a first-order file; use --second-order or .tl2"))
        }
    };
    report.pipeline = Some(if matches!(loaded, Loaded::First(_)) { "first-order" } else { "second-order" }.into());
    Ok((report, loaded, parsed.source_map))
}

fn registry(report: Report, delta: Option<&Path>) -> Result<(Report, Registry), Report> {
    let Some(path) = delta else {
        return Ok((report, builtin_registry()));
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return Err(report.fail(ErrorKind::Io, format!("{}: {e}", path.display()))),
    };
    match RegistryConfig::from_json(&text) {
        Ok(cfg) => Ok((report, builtin_registry().with_config(cfg))),
        Err(e) => Err(report.fail(ErrorKind::Usage, e.to_string())),
    }
}

fn loop_levels(map: &BTreeMap<crate::ast::LoopId, Level>, source: &SourceMap) -> BTreeMap<String, Level> {
    map.iter()
        .map(|(id, l)| (source.line_of(*id).map(|line| format!("{id}@{line}")).unwrap_or_else(|| id.to_string()), *l))
        .collect()
}

fn check_first(mut report: Report, reg: &Registry, p: &Program1, source: &SourceMap) -> Report {
    match infer_body(reg, Discipline::FirstOrder, &p.body, &p.variables(), None) {
        Ok(inf) => {
            report.verdicts.safety = Some(true);
            report.gamma = Some(inf.gamma.levels().clone());
            report.loop_levels = Some(loop_levels(&inf.loop_levels, source));
        }
        Err(ex) => {
            report.verdicts.safety = Some(false);
            report.explanation = Some(ex);
        }
    }
    report
}

fn check_second(mut report: Report, reg: &Registry, p: &Program2) -> Report {
    match infer_safety2_with(reg, p) {
        Ok(t) => {
            report.verdicts.guarded = Some(true);
            report.verdicts.simple_type = Some(true);
            report.verdicts.safety = Some(true);
            report.program_type = Some(t.simple.program_type);
            report.omega = Some(
                t.omega
                    .into_iter()
                    .map(|(name, pt)| {
                        let r = ProcedureReport { gamma: pt.gamma.levels().clone(), level: pt.level, tin: pt.tin, tout: pt.tout, loop_levels: pt.loop_levels };
                        (name, r)
                    })
                    .collect(),
            );
            report
        }
        Err(e) => match e {
            SecondOrderError::WellFormed(w) => report.fail(ErrorKind::WellFormed, w.to_string()),
            SecondOrderError::Guardedness(g) => report.fail(ErrorKind::Guardedness, g.to_string()),
            SecondOrderError::SimpleType(t) => {
                report.verdicts.guarded = Some(true);
                report.fail(ErrorKind::SimpleType, t.to_string())
            }
            SecondOrderError::Unsafe { procedure, explanation } => {
                report.verdicts.guarded = Some(true);
                report.verdicts.simple_type = Some(true);
                report.verdicts.safety = Some(false);
                report.unsafe_procedure = Some(procedure);
                report.explanation = Some(explanation);
                report
            }
        },
    }
}

fn parse_binding(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then_some((k, v.trim()))
}

fn parse_word(s: &str) -> Result<Word, String> {
    let s = s.trim_matches('"');
    if s == "eps" {
        return Ok(Word::empty());
    }
    s.parse().map_err(|e: crate::word::WordError| e.to_string())
}

/// Orders `name=word` bindings by `params`; missing names get ε and a warning.
fn bind_inputs(report: &mut Report, params: &[String], inputs: &[String]) -> Result<Vec<Word>, String> {
    let mut given = BTreeMap::new();
    for i in inputs {
        let (k, v) = parse_binding(i).ok_or_else(|| format!("bad --input {i:?}, expected NAME=WORD"))?;
        if !params.iter().any(|p| p == k) {
            return Err(format!("--input {k}: no such input; inputs are {}", params.join(", ")));
        }
        given.insert(k.to_string(), parse_word(v).map_err(|e| format!("--input {k}: {e}"))?);
    }
    Ok(params
        .iter()
        .map(|p| {
            given.remove(p).unwrap_or_else(|| {
                report.warnings.push(format!("input {p} not given, using eps"));
                Word::empty()
            })
        })
        .collect())
}

fn bind_oracles(report: &mut Report, names: &[(String, usize)], specs: &[String]) -> Result<Vec<Oracle>, String> {
    let mut given = BTreeMap::new();
    for s in specs {
        let (k, v) = parse_binding(s).ok_or_else(|| format!("bad --oracle {s:?}, expected NAME=SPEC"))?;
        if !names.iter().any(|(x, _)| x == k) {
            return Err(format!("--oracle {k}: no such oracle"));
        }
        given.insert(k.to_string(), Oracle::parse_spec(v).map_err(|e| e.to_string())?);
    }
    Ok(names
        .iter()
        .map(|(x, _)| {
            given.remove(x).unwrap_or_else(|| {
                report.warnings.push(format!("oracle {x} not given, using the constant eps function"));
                Oracle::builtin(OracleKind::Const(Word::empty()))
            })
        })
        .collect())
}

fn finish_run(mut report: Report, outcome: Result<(Word, ExecStats), (RuntimeStop, ExecStats)>, monitor: bool, source: &SourceMap) -> Report {
    match outcome {
        Ok((value, stats)) => {
            report.result = Some(value.to_string());
            report.stats = Some(stats_report(&stats, source));
            if monitor {
                report.verdicts.aperiodicity = Some(true);
            }
            report
        }
        Err((stop, stats)) => {
            report.stats = Some(stats_report(&stats, source));
            if let RuntimeStop::AperiodicityViolation(v) = &stop {
                report.verdicts.aperiodicity = Some(false);
                report.violation = Some(ViolationReport {
                    loop_id: v.loop_id.0,
                    line: source.line_of(v.loop_id),
                    iteration: v.iteration,
                    projection: v.projection.iter().map(|(x, w)| (x.clone(), w.to_string())).collect(),
                });
            }
            let subcode = stop.subcode().to_string();
            let mut report = report.fail(ErrorKind::Runtime, stop.to_string());
            if let Some(e) = report.error.as_mut() {
                e.subcode = Some(subcode);
            }
            report
        }
    }
}

/// Runs one command.
pub fn execute(command: &Command) -> Report {
    match command {
        Command::Check { file, second_order, delta } => {
            let report = Report::new("check", Some(file));
            let (report, reg) = match registry(report, delta.as_deref()) {
                Ok(r) => r,
                Err(r) => return r,
            };
            match load(report, file, *second_order, false) {
                Ok((report, Loaded::First(p), map)) => check_first(report, &reg, &p, &map),
                Ok((report, Loaded::Second(p), _)) => check_second(report, &reg, &p),
                Err(r) => r,
            }
        }
        Command::Run { file, second_order, inputs, oracles, max_steps, monitor } => {
            let report = Report::new("run", Some(file));
            let config = ExecConfig { budget: max_steps.unwrap_or_else(budget_from_env), monitor: *monitor };
            let reg = builtin_registry();
            match load(report, file, *second_order, false) {
                Ok((mut report, Loaded::First(p), map)) => {
                    if !oracles.is_empty() {
                        return report.fail(ErrorKind::Usage, "--oracle needs a second-order program");
                    }
                    let ws = match bind_inputs(&mut report, &p.params, inputs) {
                        Ok(ws) => ws,
                        Err(e) => return report.fail(ErrorKind::Usage, e),
                    };
                    let out = run_program_with(&reg, &p, &ws, config).map(|r| (r.value, r.stats));
                    finish_run(report, out, *monitor, &map)
                }
                Ok((mut report, Loaded::Second(p), map)) => {
                    let ws = match bind_inputs(&mut report, &p.boxed, inputs) {
                        Ok(ws) => ws,
                        Err(e) => return report.fail(ErrorKind::Usage, e),
                    };
                    let fs = match bind_oracles(&mut report, &p.boxed_oracles, oracles) {
                        Ok(fs) => fs,
                        Err(e) => return report.fail(ErrorKind::Usage, e),
                    };
                    let out = eval_program2_with(&reg, &p, &fs, &ws, config).map(|r| (r.value, r.stats));
                    finish_run(report, out, *monitor, &map)
                }
                Err(r) => r,
            }
        }
        Command::Forcheck { file, delta } => {
            let report = Report::new("forcheck", Some(file));
            let (report, reg) = match registry(report, delta.as_deref()) {
                Ok(r) => r,
                Err(r) => return r,
            };
            match load(report, file, false, false) {
                Ok((mut report, Loaded::First(p), map)) => {
                    report.verdicts.for_program = Some(check_for_program(&p));
                    check_first(report, &reg, &p, &map)
                }
                Ok((report, Loaded::Second(_), _)) => report.fail(ErrorKind::Usage, "forcheck takes a first-order program"),
                Err(r) => r,
            }
        }
        Command::Ops { validate, delta } => {
            let report = Report::new("ops", None);
            let (mut report, reg) = match registry(report, delta.as_deref()) {
                Ok(r) => r,
                Err(r) => return r,
            };
            report.operators = Some(
                reg.entries()
                    .map(|e| OperatorReport {
                        name: e.name.clone(),
                        symbol: e.symbol.clone(),
                        arity: e.arity,
                        class: e.class.to_string(),
                        truncate: e.truncate,
                    })
                    .collect(),
            );
            if let Some(n) = validate {
                let vals: Vec<ValidationReport> = reg.entries().map(|e| validate_class(e, *n, 0)).collect();
                report.verdicts.validation = Some(vals.iter().all(|v| v.counterexamples.is_empty()));
                report.validation = Some(vals);
            }
            report
        }
        Command::Desugar { file } => {
            let mut report = Report::new("desugar", Some(file));
            let text = match std::fs::read_to_string(file) {
                Ok(t) => t,
                Err(e) => return report.fail(ErrorKind::Io, format!("{}: {e}", file.display())),
            };
            match parse_with_map(&text, false) {
                Ok(p) => {
                    report.verdicts.parse = Some(true);
                    report.desugared = Some(pretty_print(&p.program));
                    report
                }
                Err(e) => report.fail(ErrorKind::Parse, e.to_string()),
            }
        }
    }
}

/// Parses arguments, prints the report, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let report = execute(&cli.command);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let text = if cli.json { report.to_json() + "\n" } else { report.to_text() };
    // A closed pipe is not an error of the command.
    let _ = std::io::Write::write_all(&mut std::io::stdout().lock(), text.as_bytes());
    report.exit_code()
}
