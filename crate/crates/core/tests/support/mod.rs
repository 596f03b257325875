//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tierlang::ast::{assign_loop_ids, Expr, LoopId, Program1, Stmt};
use tierlang::opreg::builtins;
use tierlang::word::Word;

pub fn corpus(name: &str) -> String {
    format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn read_corpus(name: &str) -> String {
    std::fs::read_to_string(corpus(name)).unwrap()
}

pub fn w(s: &str) -> Word {
    s.parse().unwrap()
}

/// Symbols of `w` in ascending order, 0 before 1 before #.
pub fn reference_sort(w: &Word) -> Word {
    let mut s: Vec<char> = w.to_string().chars().collect();
    s.sort_by_key(|c| match c {
        '0' => 0,
        '1' => 1,
        _ => 2,
    });
    s.into_iter().collect::<String>().parse().unwrap()
}

/// (x ↦ f(x) cut to |v|) applied |n| times to u.
pub fn reference_iterate(f: impl Fn(&Word) -> Word, u: &Word, v: &Word, n: &Word) -> Word {
    let mut x = u.clone();
    for _ in 0..n.len() {
        let y = f(&x);
        x = y.prefix(y.len().min(v.len()));
    }
    x
}

// ---------------------------------------------------------------------------
// Evaluation trees

/// One judgment of a big-step derivation, with the store it starts from.
/// Only `while` judgments carry a loop id.
#[derive(Debug, Clone)]
pub struct Node {
    pub loop_id: Option<LoopId>,
    pub guard_vars: Vec<String>,
    pub store: BTreeMap<String, Word>,
    pub children: Vec<Node>,
}

pub struct TreeEval {
    pub nodes: usize,
    pub limit: usize,
}

fn get(store: &BTreeMap<String, Word>, x: &str) -> Word {
    store.get(x).cloned().unwrap_or_default()
}

/// Variables a guard is compared on: declass drops its first operand.
pub fn u_vars(e: &Expr) -> BTreeSet<String> {
    match e {
        Expr::Var(x) => BTreeSet::from([x.clone()]),
        Expr::Lit(_) => BTreeSet::new(),
        Expr::Op(_, args) | Expr::OracleCall(_, args) => args.iter().flat_map(u_vars).collect(),
        Expr::Declass(_, b) => u_vars(b),
    }
}

impl TreeEval {
    fn node(&mut self) -> Option<()> {
        self.nodes += 1;
        (self.nodes <= self.limit).then_some(())
    }

    pub fn expr(&mut self, store: &BTreeMap<String, Word>, e: &Expr) -> Option<Word> {
        self.node()?;
        Some(match e {
            Expr::Var(x) => get(store, x),
            Expr::Lit(w) => w.clone(),
            Expr::Op(op, args) => {
                let vals = args.iter().map(|a| self.expr(store, a)).collect::<Option<Vec<_>>>()?;
                builtins().apply(op, &vals).ok()?
            }
            Expr::Declass(a, b) => {
                let (x, y) = (self.expr(store, a)?, self.expr(store, b)?);
                "1".repeat(x.len().min(y.len())).parse().unwrap()
            }
            Expr::OracleCall(..) => return None,
        })
    }

    /// `(store', broke, judgment)`; `None` past the node limit.
    pub fn stmt(&mut self, store: BTreeMap<String, Word>, s: &Stmt) -> Option<(BTreeMap<String, Word>, bool, Node)> {
        self.node()?;
        let leaf = |store: &BTreeMap<String, Word>| Node { loop_id: None, guard_vars: vec![], store: store.clone(), children: vec![] };
        match s {
            Stmt::Skip => {
                let n = leaf(&store);
                Some((store, false, n))
            }
            Stmt::Assign(x, e) => {
                let n = leaf(&store);
                let v = self.expr(&store, e)?;
                let mut out = store;
                out.insert(x.clone(), v);
                Some((out, false, n))
            }
            Stmt::Seq(items) => {
                // Right-nested: s1; (s2; (...)).
                let mut n = leaf(&store);
                let (mid, broke, first) = self.stmt(store, &items[0])?;
                n.children.push(first);
                if broke {
                    return Some((mid, true, n));
                }
                let rest = if items.len() == 2 { items[1].clone() } else { Stmt::Seq(items[1..].to_vec()) };
                let (out, broke, second) = self.stmt(mid, &rest)?;
                n.children.push(second);
                Some((out, broke, n))
            }
            Stmt::If(e, a, b) => {
                let mut n = leaf(&store);
                let branch = if self.expr(&store, e)?.truthy() { a } else { b };
                let (out, broke, child) = self.stmt(store, branch)?;
                n.children.push(child);
                Some((out, broke, n))
            }
            Stmt::Break(e) => {
                let n = leaf(&store);
                let broke = self.expr(&store, e)?.truthy();
                Some((store, broke, n))
            }
            Stmt::While(wl) => {
                let mut n = Node { loop_id: Some(wl.id), guard_vars: u_vars(&wl.guard).into_iter().collect(), store: store.clone(), children: vec![] };
                if !self.expr(&store, &wl.guard)?.truthy() {
                    return Some((store, false, n));
                }
                let (mid, broke, body) = self.stmt(store, &wl.body)?;
                n.children.push(body);
                if broke {
                    return Some((mid, false, n));
                }
                let (out, _, again) = self.stmt(mid, s)?;
                n.children.push(again);
                Some((out, false, n))
            }
            Stmt::OracleBreak { .. } | Stmt::For { .. } => None,
        }
    }
}

fn project(n: &Node) -> Vec<Word> {
    n.guard_vars.iter().map(|x| get(&n.store, x)).collect()
}

fn search(n: &Node, ancestors: &mut Vec<(LoopId, Vec<Word>)>) -> bool {
    let mine = n.loop_id.map(|id| (id, project(n)));
    if let Some(m) = &mine {
        if ancestors.contains(m) {
            return true;
        }
        ancestors.push(m.clone());
    }
    let found = n.children.iter().any(|c| search(c, ancestors));
    if mine.is_some() {
        ancestors.pop();
    }
    found
}

/// Whether some `while` judgment has a strict sub-judgment for the same loop
/// whose store agrees with it on the guard's undeclassified variables.
pub fn tree_has_violation(root: &Node) -> bool {
    search(root, &mut Vec::new())
}

/// Evaluation tree of `p` on `inputs`, or `None` past `limit` nodes.
pub fn evaluation_tree(p: &Program1, inputs: &[Word], limit: usize) -> Option<Node> {
    let store: BTreeMap<String, Word> = p.params.iter().cloned().zip(inputs.iter().cloned()).collect();
    let mut ev = TreeEval { nodes: 0, limit };
    ev.stmt(store, &p.body).map(|(_, _, n)| n)
}

// ---------------------------------------------------------------------------
// Program generators

pub struct Gen<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub vars: Vec<String>,
    pub max_depth: usize,
}

const LITERALS: &[&str] = &["", "1", "0", "11", "1#0"];

impl Gen<'_> {
    fn var(&mut self) -> Expr {
        Expr::Var(self.vars.choose(self.rng).unwrap().clone())
    }

    pub fn expr(&mut self, depth: usize) -> Expr {
        let r = self.rng.gen_range(0..10);
        if depth == 0 || r < 3 {
            return if self.rng.gen_bool(0.8) { self.var() } else { Expr::Lit(w(LITERALS.choose(self.rng).unwrap())) };
        }
        if r == 3 {
            return Expr::declass(self.expr(depth - 1), self.expr(depth - 1));
        }
        let ops: Vec<_> = builtins().entries().filter(|e| e.arity > 0).collect();
        let op = ops.choose(self.rng).unwrap();
        let args = (0..op.arity).map(|_| self.expr(depth - 1)).collect();
        Expr::Op(op.name.clone(), args)
    }

    pub fn stmt(&mut self, depth: usize, len: usize) -> Stmt {
        let items = (0..len.max(1)).map(|_| self.one(depth)).collect();
        Stmt::seq(items)
    }

    fn one(&mut self, depth: usize) -> Stmt {
        match self.rng.gen_range(0..10) {
            0..=4 => {
                let x = self.vars.choose(self.rng).unwrap().clone();
                Stmt::Assign(x, self.expr(2))
            }
            5 | 6 if depth < self.max_depth => {
                let len = self.rng.gen_range(1..=3);
                let guard = self.expr(2);
                let body = self.stmt(depth + 1, len);
                Stmt::while_loop(0, guard, body)
            }
            7 => {
                let g = self.expr(1);
                let (a, b) = (self.stmt(depth, 1), self.stmt(depth, 1));
                Stmt::If(g, Box::new(a), Box::new(b))
            }
            8 if depth > 0 => Stmt::Break(self.expr(1)),
            _ => Stmt::Skip,
        }
    }

    pub fn program(&mut self) -> Program1 {
        let len = self.rng.gen_range(1..=4);
        let mut body = self.stmt(0, len);
        assign_loop_ids(&mut body, 0);
        let params = self.vars[..self.rng.gen_range(1..=self.vars.len())].to_vec();
        let ret = self.vars.choose(self.rng).unwrap().clone();
        Program1 { params, body, ret }
    }
}

pub fn random_program(rng: &mut ChaCha8Rng, nvars: usize, max_depth: usize) -> Program1 {
    let vars = ["x", "y", "z", "t"][..nvars].iter().map(|s| s.to_string()).collect();
    Gen { rng, vars, max_depth }.program()
}

pub fn random_binary(rng: &mut ChaCha8Rng, max: usize) -> Word {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| if rng.gen_bool(0.5) { '1' } else { '0' }).collect::<String>().parse().unwrap()
}

/// Every `x0 := a; while (g) { s1; s2 }` over three variables with parts from
/// small fixed menus.
pub fn loop_family() -> Vec<Program1> {
    let v = |x: &str| Expr::var(x);
    let lit = |s: &str| Expr::Lit(w(s));
    let op = |o: &str, a: Vec<Expr>| Expr::op(o, a);
    let guards = vec![
        v("x"),
        op(">", vec![v("x"), lit("")]),
        op("!=", vec![v("y"), lit("")]),
        op("and", vec![v("x"), v("z")]),
        Expr::declass(v("y"), lit("1")),
    ];
    let mut atoms = vec![Stmt::Skip];
    for x in ["x", "y", "z"] {
        atoms.push(Stmt::Assign(x.into(), op("decb", vec![v("y")])));
        atoms.push(Stmt::Assign(x.into(), op("-", vec![v(x), lit("1")])));
        atoms.push(Stmt::Assign(x.into(), Expr::declass(v("y"), lit("1"))));
        atoms.push(Stmt::Assign(x.into(), op("tl", vec![v(x)])));
    }
    atoms.push(Stmt::Assign("z".into(), op("not", vec![v("z")])));
    atoms.push(Stmt::Break(op("=", vec![v("y"), lit("")])));
    let preludes = vec![Stmt::Skip, Stmt::Assign("x".into(), lit("1")), Stmt::Assign("z".into(), lit("1"))];
    let mut out = Vec::new();
    for pre in &preludes {
        for g in &guards {
            for a in &atoms {
                for b in &atoms {
                    let mut body = Stmt::seq(vec![pre.clone(), Stmt::while_loop(0, g.clone(), Stmt::seq(vec![a.clone(), b.clone()]))]);
                    assign_loop_ids(&mut body, 0);
                    out.push(Program1 { params: vec!["x".into(), "y".into(), "z".into()], body, ret: "y".into() });
                }
            }
        }
    }
    out
}

pub fn family_inputs() -> Vec<Vec<Word>> {
    vec![
        vec![w("1"), w("101"), w("1")],
        vec![w(""), w("11"), w("")],
        vec![w("10"), w("1"), w("0")],
    ]
}
