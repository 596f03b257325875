//! Operator registry: semantics, declared size classes and the safe operator typing environment.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::ast::Level;
use crate::word::{concat, is_subword, shortlex_compare, Symbol, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum OperatorClass {
    Neutral,
    Positive { c: usize },
    /// Output size bounded by `coeff * (n + 1)^degree` for inputs of size at most `n`.
    Polynomial { degree: u32, coeff: u64 },
}

impl fmt::Display for OperatorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorClass::Neutral => write!(f, "neutral"),
            OperatorClass::Positive { c } => write!(f, "positive(c={c})"),
            OperatorClass::Polynomial { degree, coeff } => {
                write!(f, "polynomial({coeff}*(n+1)^{degree})")
            }
        }
    }
}

/// Which typing discipline a membership query belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    FirstOrder,
    SecondOrder,
}

pub type Semantics = Arc<dyn Fn(&[Word]) -> Word + Send + Sync>;

#[derive(Clone)]
pub struct OperatorEntry {
    pub name: String,
    /// Symbol used in listings, e.g. `+1` for `inc`.
    pub symbol: String,
    pub arity: usize,
    pub semantics: Semantics,
    pub class: OperatorClass,
    pub truncate: bool,
}

impl fmt::Debug for OperatorEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorEntry")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("class", &self.class)
            .field("truncate", &self.truncate)
            .finish()
    }
}

impl OperatorEntry {
    pub fn apply(&self, args: &[Word]) -> Word {
        (self.semantics)(args)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("unknown operator `{0}`")]
    Unknown(String),
    #[error("operator `{op}` expects {expected} argument(s), got {got}")]
    Arity { op: String, expected: usize, got: usize },
}

/// One component of a forbidden functional level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelPattern {
    Any,
    Exactly(Level),
}

impl LevelPattern {
    pub fn matches(self, l: Level) -> bool {
        match self {
            LevelPattern::Any => true,
            LevelPattern::Exactly(x) => x == l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("registry config is not valid JSON: {0}")]
    Json(String),
    #[error("registry config: {0}")]
    Shape(String),
}

/// Restriction of the maximal safe environment: forbidden functional levels per operator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegistryConfig {
    pub forbidden: BTreeMap<String, Vec<Vec<LevelPattern>>>,
}

impl RegistryConfig {
    /// Parses `{"forbidden": {"op": [[l1, ..., lk+1], ...]}}`; components are
    /// naturals, `"inf"`, or `"*"`.
    pub fn from_json(text: &str) -> Result<RegistryConfig, ConfigError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        let obj = v.as_object().ok_or_else(|| ConfigError::Shape("top level must be an object".into()))?;
        let mut cfg = RegistryConfig::default();
        let Some(forbidden) = obj.get("forbidden") else {
            return Ok(cfg);
        };
        let forbidden = forbidden
            .as_object()
            .ok_or_else(|| ConfigError::Shape("`forbidden` must map operator names to lists".into()))?;
        for (op, lists) in forbidden {
            let lists = lists
                .as_array()
                .ok_or_else(|| ConfigError::Shape(format!("`{op}`: expected a list of levels")))?;
            let mut pats = Vec::new();
            for l in lists {
                let comps = l
                    .as_array()
                    .ok_or_else(|| ConfigError::Shape(format!("`{op}`: each level must be a list")))?;
                let mut pat = Vec::new();
                for c in comps {
                    pat.push(match c {
                        serde_json::Value::Number(n) => n
                            .as_u64()
                            .and_then(|n| u32::try_from(n).ok())
                            .map(|n| LevelPattern::Exactly(Level::Fin(n)))
                            .ok_or_else(|| ConfigError::Shape(format!("`{op}`: bad level {n}")))?,
                        serde_json::Value::String(s) if s == "*" => LevelPattern::Any,
                        serde_json::Value::String(s) if s == "inf" => LevelPattern::Exactly(Level::Inf),
                        other => return Err(ConfigError::Shape(format!("`{op}`: bad level {other}"))),
                    });
                }
                pats.push(pat);
            }
            cfg.forbidden.insert(op.clone(), pats);
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
pub struct Registry {
    entries: BTreeMap<String, OperatorEntry>,
    config: RegistryConfig,
}

fn compare(f: fn(std::cmp::Ordering) -> bool) -> Semantics {
    Arc::new(move |a: &[Word]| Word::from_bool(f(shortlex_compare(&a[0], &a[1]))))
}

fn constant(w: Word) -> Semantics {
    Arc::new(move |_: &[Word]| w.clone())
}

/// `hd`: the part before the first `#` when there is one, otherwise the first symbol.
pub fn head(w: &Word) -> Word {
    match w.position_of_hash() {
        Some(i) => w.prefix(i),
        None => w.prefix(1),
    }
}

/// `tl`: the part after the first `#` when there is one, otherwise all but the first symbol.
pub fn tail(w: &Word) -> Word {
    match w.position_of_hash() {
        Some(i) => w.suffix_from(i + 1),
        None => w.suffix_from(1),
    }
}

pub fn cons(u: &Word, v: &Word) -> Word {
    if u.contains_hash() {
        Word::empty()
    } else {
        concat(&u.push(Symbol::Hash), v)
    }
}

/// `v # 0^n` where `|v| + n + 1 = |u|`, or ε when `u` is too short.
pub fn pad(u: &Word, v: &Word) -> Word {
    match u.len().checked_sub(v.len() + 1) {
        Some(n) => concat(&v.push(Symbol::Hash), &Word::zeros(n)),
        None => Word::empty(),
    }
}

pub fn truncate(v: &Word, w: &Word) -> Word {
    v.prefix(w.len())
}

/// Binary decrement, most significant bit first; ε on zero or malformed input.
pub fn binary_decrement(w: &Word) -> Word {
    if w.contains_hash() {
        return Word::empty();
    }
    let syms = w.symbols();
    let Some(last_one) = syms.iter().rposition(|&s| s == Symbol::One) else {
        return Word::empty();
    };
    let mut out: Vec<Symbol> = syms.to_vec();
    out[last_one] = Symbol::Zero;
    for s in &mut out[last_one + 1..] {
        *s = Symbol::One;
    }
    let first = out.iter().position(|&s| s == Symbol::One).unwrap_or(out.len() - 1);
    Word::from_symbols(out[first..].to_vec())
}

/// `|w|` written in binary; ε for the empty word.
pub fn binary_length(w: &Word) -> Word {
    let n = w.len();
    if n == 0 {
        return Word::empty();
    }
    let bits = format!("{n:b}");
    bits.parse().expect("binary digits are symbols")
}

fn entry(name: &str, symbol: &str, arity: usize, class: OperatorClass, semantics: Semantics) -> OperatorEntry {
    OperatorEntry { name: name.into(), symbol: symbol.into(), arity, semantics, class, truncate: false }
}

/// Shared builtin registry without restrictions.
pub fn builtins() -> &'static Registry {
    static REG: std::sync::OnceLock<Registry> = std::sync::OnceLock::new();
    REG.get_or_init(builtin_registry)
}

pub fn builtin_registry() -> Registry {
    use std::cmp::Ordering::*;
    use OperatorClass::*;
    let mut list = vec![
        entry("=", "=", 2, Neutral, compare(|o| o == Equal)),
        entry("!=", "≠", 2, Neutral, compare(|o| o != Equal)),
        entry("<", "<", 2, Neutral, compare(|o| o == Less)),
        entry("<=", "≤", 2, Neutral, compare(|o| o != Greater)),
        entry(">", ">", 2, Neutral, compare(|o| o == Greater)),
        entry(">=", "≥", 2, Neutral, compare(|o| o != Less)),
        entry("not", "not", 1, Neutral, Arc::new(|a: &[Word]| Word::from_bool(!a[0].truthy()))),
        entry("and", "and", 2, Neutral, Arc::new(|a: &[Word]| Word::from_bool(a[0].truthy() && a[1].truthy()))),
        entry("or", "or", 2, Neutral, Arc::new(|a: &[Word]| Word::from_bool(a[0].truthy() || a[1].truthy()))),
        entry("0", "0", 0, Neutral, constant(Word::empty())),
        entry("true", "true", 0, Neutral, constant(Word::one())),
        entry("false", "false", 0, Neutral, constant(Word::zero())),
        entry("eps", "ε", 0, Neutral, constant(Word::empty())),
        entry(
            "inc",
            "+1",
            1,
            Positive { c: 1 },
            Arc::new(|a: &[Word]| if a[0].is_unary() { a[0].push(Symbol::One) } else { Word::empty() }),
        ),
        entry(
            "dec",
            "-1",
            1,
            Neutral,
            Arc::new(|a: &[Word]| if a[0].is_unary() { a[0].suffix_from(1) } else { Word::empty() }),
        ),
        entry("hd", "hd", 1, Neutral, Arc::new(|a: &[Word]| head(&a[0]))),
        entry("tl", "tl", 1, Neutral, Arc::new(|a: &[Word]| tail(&a[0]))),
        entry(
            "+",
            "+",
            2,
            Positive { c: 1 },
            Arc::new(|a: &[Word]| if a[1].len() == 1 { concat(&a[0], &a[1]) } else { Word::empty() }),
        ),
        entry(
            "-",
            "-",
            2,
            Neutral,
            Arc::new(|a: &[Word]| a[0].prefix(a[0].len().saturating_sub(a[1].len()))),
        ),
        entry("decb", "-1b", 1, Positive { c: 0 }, Arc::new(|a: &[Word]| binary_decrement(&a[0]))),
        entry("len", "|.|", 1, Positive { c: 0 }, Arc::new(|a: &[Word]| binary_length(&a[0]))),
        entry("cons", "cons", 2, Polynomial { degree: 1, coeff: 2 }, Arc::new(|a: &[Word]| cons(&a[0], &a[1]))),
        entry("pad", "pad", 2, Positive { c: 0 }, Arc::new(|a: &[Word]| pad(&a[0], &a[1]))),
    ];
    let mut trunc = entry("truncate", "truncate", 2, Neutral, Arc::new(|a: &[Word]| truncate(&a[0], &a[1])));
    trunc.truncate = true;
    list.push(trunc);
    Registry {
        entries: list.into_iter().map(|e| (e.name.clone(), e)).collect(),
        config: RegistryConfig::default(),
    }
}

/// Registry name of a literal: the constant entry when one exists, otherwise the quoted word.
pub fn literal_name(w: &Word) -> String {
    if w.is_empty() {
        "eps".into()
    } else if *w == Word::one() {
        "true".into()
    } else if *w == Word::zero() {
        "false".into()
    } else {
        format!("\"{w}\"")
    }
}

impl Registry {
    pub fn with_config(mut self, config: RegistryConfig) -> Registry {
        self.config = config;
        self
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn entries(&self) -> impl Iterator<Item = &OperatorEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&OperatorEntry> {
        self.entries.get(name)
    }

    /// Like `get`, but also resolves quoted literal names to arity-0 positive constants.
    pub fn lookup(&self, name: &str) -> Option<OperatorEntry> {
        if let Some(e) = self.entries.get(name) {
            return Some(e.clone());
        }
        let inner = name.strip_prefix('"')?.strip_suffix('"')?;
        let w: Word = inner.parse().ok()?;
        Some(entry(name, name, 0, OperatorClass::Positive { c: w.len() }, constant(w)))
    }

    pub fn literal_entry(&self, w: &Word) -> OperatorEntry {
        self.lookup(&literal_name(w)).expect("literal names always resolve")
    }

    pub fn apply(&self, name: &str, args: &[Word]) -> Result<Word, OpError> {
        let e = self.get(name).ok_or_else(|| OpError::Unknown(name.into()))?;
        if e.arity != args.len() {
            return Err(OpError::Arity { op: name.into(), expected: e.arity, got: args.len() });
        }
        Ok(e.apply(args))
    }

    pub fn forbidden(&self, op: &str) -> &[Vec<LevelPattern>] {
        self.config.forbidden.get(op).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_forbidden(&self, op: &str, candidate: &[Level]) -> bool {
        self.forbidden(op).iter().any(|pat| {
            pat.len() == candidate.len() && pat.iter().zip(candidate).all(|(p, &l)| p.matches(l))
        })
    }

    /// Membership of `candidate = τ1 → … → τk+1` in `Δ(op)(tin, tout)`.
    pub fn delta_membership(
        &self,
        op: &str,
        tin: Level,
        tout: Level,
        candidate: &[Level],
        discipline: Discipline,
    ) -> Result<bool, OpError> {
        let e = self.lookup(op).ok_or_else(|| OpError::Unknown(op.into()))?;
        Ok(maximal_membership(&e, tin, tout, candidate, discipline) && !self.is_forbidden(op, candidate))
    }
}

/// The class template alone, ignoring any configured restriction.
pub fn maximal_membership(
    e: &OperatorEntry,
    tin: Level,
    tout: Level,
    candidate: &[Level],
    discipline: Discipline,
) -> bool {
    if candidate.len() != e.arity + 1 {
        return false;
    }
    let (res, args) = candidate.split_last().expect("arity + 1 >= 1");
    let res = *res;
    if discipline == Discipline::SecondOrder && e.truncate {
        return args[0].is_inf() && tout <= args[1] && res < tin;
    }
    if res.is_inf() {
        return false;
    }
    if discipline == Discipline::FirstOrder && args.iter().any(|a| a.is_inf()) {
        return false;
    }
    let neutral = res <= Level::meet_all(args.iter().copied())
        && (discipline == Discipline::FirstOrder || !Level::join_all(args.iter().copied()).is_inf());
    match e.class {
        OperatorClass::Neutral => neutral,
        OperatorClass::Positive { .. } => neutral && (res < tin || res == Level::ZERO),
        OperatorClass::Polynomial { .. } => tout == Level::ZERO,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub inputs: Vec<Word>,
    pub output: Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub op: String,
    pub class: String,
    pub samples: usize,
    pub counterexamples: Vec<Counterexample>,
}

const MAX_SAMPLE_SIZE: usize = 64;

fn sample_word(rng: &mut StdRng) -> Word {
    let n = rng.gen_range(0..=MAX_SAMPLE_SIZE);
    let pick = |rng: &mut StdRng, alphabet: &[Symbol], n: usize| {
        Word::from_symbols((0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect())
    };
    match rng.gen_range(0..6) {
        0 => pick(rng, &[Symbol::Zero, Symbol::One, Symbol::Hash], n),
        1 => Word::ones(n),
        2 => pick(rng, &[Symbol::Zero, Symbol::One], n),
        3 => {
            let k = rng.gen_range(0..=n.saturating_sub(1));
            let u = pick(rng, &[Symbol::Zero, Symbol::One], k);
            let v = pick(rng, &[Symbol::Zero, Symbol::One, Symbol::Hash], n.saturating_sub(k + 1));
            cons(&u, &v)
        }
        4 => pick(rng, &[Symbol::Zero, Symbol::One, Symbol::Hash], n.min(2)),
        _ => Word::empty(),
    }
}

/// Whether one input/output sample is consistent with a declared class.
pub fn sample_respects_class(class: OperatorClass, inputs: &[Word], output: &Word) -> bool {
    let max_in = inputs.iter().map(Word::len).max().unwrap_or(0);
    match class {
        // ε is a factor of every word, which also covers constants.
        OperatorClass::Neutral => {
            output.is_empty()
                || *output == Word::zero()
                || *output == Word::one()
                || inputs.iter().any(|w| is_subword(output, w))
        }
        OperatorClass::Positive { c } => output.len() <= max_in + c,
        OperatorClass::Polynomial { degree, coeff } => {
            (output.len() as u128) <= (coeff as u128) * ((max_in as u128) + 1).pow(degree)
        }
    }
}

/// Property-tests the declared class of `entry` on `samples` random tuples.
pub fn validate_class(entry: &OperatorEntry, samples: usize, seed: u64) -> ValidationReport {
    let mut rng = StdRng::seed_from_u64(seed ^ entry.name.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)));
    let mut counterexamples = Vec::new();
    for _ in 0..samples {
        let inputs: Vec<Word> = (0..entry.arity).map(|_| sample_word(&mut rng)).collect();
        let output = entry.apply(&inputs);
        if !sample_respects_class(entry.class, &inputs, &output) {
            counterexamples.push(Counterexample { inputs, output });
        }
    }
    ValidationReport { op: entry.name.clone(), class: entry.class.to_string(), samples, counterexamples }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn semantics_examples() {
        let r = builtin_registry();
        assert_eq!(r.apply("inc", &[w("11")]).unwrap(), w("111"));
        assert_eq!(r.apply("inc", &[w("1#0")]).unwrap(), Word::empty());
        assert_eq!(r.apply("len", &[w("100#11")]).unwrap(), w("110"));
        assert_eq!(r.apply("truncate", &[w("10110"), w("111")]).unwrap(), w("101"));
        assert_eq!(r.apply("pad", &[w("11111"), w("11")]).unwrap(), w("11#00"));
        assert_eq!(r.apply("cons", &[w("10"), w("1")]).unwrap(), w("10#1"));
        assert_eq!(r.apply("hd", &[w("10#1")]).unwrap(), w("10"));
        assert_eq!(r.apply("tl", &[w("10#1")]).unwrap(), w("1"));
        assert_eq!(r.apply("hd", &[w("01")]).unwrap(), w("0"));
        assert_eq!(r.apply("tl", &[w("01")]).unwrap(), w("1"));
        assert_eq!(r.apply("decb", &[w("0")]).unwrap(), Word::empty());
        assert_eq!(r.apply("decb", &[w("100")]).unwrap(), w("11"));
        assert_eq!(r.apply("decb", &[w("1")]).unwrap(), w("0"));
        assert_eq!(r.apply("dec", &[Word::empty()]).unwrap(), Word::empty());
        assert_eq!(r.apply("+", &[w("10"), w("1")]).unwrap(), w("101"));
        assert_eq!(r.apply("-", &[w("111"), w("1")]).unwrap(), w("11"));
        assert_eq!(r.apply("cons", &[w("1#"), w("1")]).unwrap(), Word::empty());
    }

    #[test]
    fn membership_examples() {
        let r = builtin_registry();
        let f = |n| Level::Fin(n);
        let fo = Discipline::FirstOrder;
        let so = Discipline::SecondOrder;
        assert!(r.delta_membership(">", f(1), f(1), &[f(1), f(1), f(1)], fo).unwrap());
        assert!(!r.delta_membership("inc", f(1), f(1), &[f(1), f(1)], fo).unwrap());
        assert!(r.delta_membership("truncate", f(1), f(1), &[Level::Inf, f(1), f(0)], so).unwrap());
        assert!(!r.delta_membership("truncate", f(1), f(1), &[f(3), f(1), f(0)], so).unwrap());
        for c in [[f(0), f(0), f(0)], [f(2), f(1), f(0)]] {
            assert!(!r.delta_membership("cons", f(1), f(1), &c, fo).unwrap());
        }
        assert!(r.delta_membership("cons", f(0), f(0), &[f(2), f(1), f(5)], fo).unwrap());
        assert!(!r.delta_membership("=", f(1), f(1), &[Level::Inf, f(1), f(0)], so).unwrap());
        assert!(r.delta_membership("nope", f(0), f(0), &[], fo).is_err());
    }

    #[test]
    fn config_restricts() {
        let cfg = RegistryConfig::from_json(r#"{"forbidden": {">": [[1, 1, 1], ["*", "inf", 0]]}}"#).unwrap();
        let r = builtin_registry().with_config(cfg);
        let f = |n| Level::Fin(n);
        assert!(!r.delta_membership(">", f(1), f(1), &[f(1), f(1), f(1)], Discipline::FirstOrder).unwrap());
        assert!(r.delta_membership(">", f(1), f(1), &[f(2), f(1), f(1)], Discipline::FirstOrder).unwrap());
        assert!(RegistryConfig::from_json(r#"{"forbidden": {">": [[-1]]}}"#).is_err());
    }

    #[test]
    fn misdeclared_class_is_caught() {
        let r = builtin_registry();
        let mut inc = r.get("inc").unwrap().clone();
        assert!(validate_class(&inc, 1000, 7).counterexamples.is_empty());
        inc.class = OperatorClass::Neutral;
        assert!(!validate_class(&inc, 1000, 7).counterexamples.is_empty());
    }
}
