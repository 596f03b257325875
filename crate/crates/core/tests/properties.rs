mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;
use tierlang::ast::{Expr, Program, Stmt};
use tierlang::interp1::{eval_expr, monitor_guard, run_program, ExecConfig, LoopMonitorState, RuntimeStop, Store1};
use tierlang::opreg::builtins;
use tierlang::parser::{desugar_for, parse_program1, parse_str, pretty_print, pretty_print1};
use tierlang::safety1::{check_derivation, infer_safety, typecheck_with_gamma, undeclassified_vars, VarTypeEnv};
use tierlang::secondorder::{embed_program1, eval_program2};
use tierlang::word::{concat, Word};

fn word() -> impl Strategy<Value = Word> {
    "[01#]{0,12}".prop_map(|s| s.parse().unwrap())
}

fn binary() -> impl Strategy<Value = Word> {
    "[01]{0,8}".prop_map(|s| s.parse().unwrap())
}

fn program(seed: u64) -> tierlang::ast::Program1 {
    random_program(&mut ChaCha8Rng::seed_from_u64(seed), 3, 2)
}

fn small() -> ExecConfig {
    ExecConfig { budget: 2_000, monitor: false }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn words_print_and_parse(a in word()) {
        prop_assert_eq!(a.to_string().parse::<Word>().unwrap(), a);
    }

    #[test]
    fn shortlex_is_length_first(a in word(), b in word()) {
        if a.len() != b.len() {
            prop_assert_eq!(a < b, a.len() < b.len());
        }
        prop_assert_eq!(a.cmp(&b).reverse(), b.cmp(&a));
    }

    #[test]
    fn concat_adds_lengths(a in word(), b in word()) {
        let c = concat(&a, &b);
        prop_assert_eq!(c.len(), a.len() + b.len());
        prop_assert_eq!(c.prefix(a.len()), a);
    }

    #[test]
    fn declass_is_unary_min(a in word(), b in word()) {
        let e = Expr::declass(Expr::Lit(a.clone()), Expr::Lit(b.clone()));
        prop_assert_eq!(eval_expr(&Store1::new(), &e).unwrap(), Word::ones(a.len().min(b.len())));
    }

    #[test]
    fn pretty_print_round_trips(seed in any::<u64>()) {
        let p = program(seed);
        let text = pretty_print1(&p);
        prop_assert_eq!(parse_program1(&text).unwrap(), p, "{}", text);
    }

    #[test]
    fn desugaring_is_idempotent(seed in any::<u64>()) {
        let p = program(seed);
        let once = desugar_for(&p.body).unwrap();
        prop_assert_eq!(desugar_for(&once).unwrap(), once);
    }

    #[test]
    fn evaluation_is_deterministic(seed in any::<u64>(), a in binary(), b in binary()) {
        let p = program(seed);
        let inputs: Vec<Word> = [a, b, Word::empty()][..p.params.len()].to_vec();
        prop_assert_eq!(run_program(&p, &inputs, small()), run_program(&p, &inputs, small()));
    }

    #[test]
    fn breaks_stay_inside_loops(seed in any::<u64>(), a in binary()) {
        // Generated breaks only occur under a loop, so no run ends in TopLevelBreak.
        let p = program(seed);
        let inputs = vec![a; p.params.len()];
        prop_assert!(!matches!(run_program(&p, &inputs, small()), Err(RuntimeStop::TopLevelBreak)));
    }

    #[test]
    fn monitor_only_sees_undeclassified_vars(seed in any::<u64>(), a in binary(), b in binary()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars = vec!["x".to_string(), "y".to_string()];
        let g = support::Gen { rng: &mut rng, vars, max_depth: 1 }.expr(2);
        let u = undeclassified_vars(&g);
        prop_assert!(u.is_subset(&g.vars()));
        prop_assert_eq!(u.clone(), u_vars(&g));
        // Stores equal on U(g) are indistinguishable to the monitor.
        let mut state = LoopMonitorState::new(tierlang::ast::LoopId(0), &g);
        let s1 = Store1::from_pairs([("x", a.clone()), ("y", b.clone())]);
        let mut s2 = s1.clone();
        for x in ["x", "y"] {
            if !u.contains(x) {
                s2.set(x, concat(s1.get(x), &Word::one()));
            }
        }
        prop_assert!(monitor_guard(&mut state, &s1).is_ok());
        prop_assert!(monitor_guard(&mut state, &s2).is_err());
    }

    #[test]
    fn inferred_typings_check(seed in any::<u64>()) {
        let p = program(seed);
        if let Ok(inf) = infer_safety(&p) {
            prop_assert!(check_derivation(&p, &inf.gamma, &inf.derivation));
            prop_assert!(typecheck_with_gamma(builtins(), &p, &inf.gamma).is_ok());
        }
    }

    #[test]
    fn safety_is_monotone_in_the_program(seed in any::<u64>()) {
        // Dropping the last statement keeps a safe program safe.
        let p = program(seed);
        if let Stmt::Seq(items) = &p.body {
            if infer_safety(&p).is_ok() {
                let mut q = p.clone();
                q.body = Stmt::seq(items[..items.len() - 1].to_vec());
                prop_assert!(infer_safety(&q).is_ok(), "{}", pretty_print1(&q));
            }
        }
    }

    #[test]
    fn embedded_programs_agree(seed in any::<u64>(), a in binary(), b in binary()) {
        let p = program(seed);
        let inputs: Vec<Word> = [a, b, Word::empty()][..p.params.len()].to_vec();
        let cfg = ExecConfig { budget: 1_000_000, monitor: true };
        let first = run_program(&p, &inputs, cfg);
        let second = eval_program2(&embed_program1(&p), &[], &inputs, cfg);
        match (first, second) {
            (Ok(r1), Ok(r2)) => prop_assert_eq!(r1.value, r2.value),
            // A top-level break ends the procedure body normally.
            (Err(RuntimeStop::TopLevelBreak), _) => {}
            (Err(e1), Err(e2)) => prop_assert_eq!(e1.subcode(), e2.subcode()),
            (r1, r2) => prop_assert!(false, "{:?} vs {:?}", r1.map(|r| r.value), r2.map(|r| r.value)),
        }
    }
}

#[test]
fn corpus_round_trips() {
    for name in ["bubble.tl", "bubble_for.tl", "exp1.tl", "exp2.tl", "inc_loop.tl", "mult_for.tl", "I.tl2"] {
        let p = parse_str(&read_corpus(name)).unwrap();
        // `for` sugar is not printed back, so compare the printed forms.
        let text = pretty_print(&p);
        assert_eq!(pretty_print(&parse_str(&text).unwrap()), text, "{name}");
        if let Program::First(p1) = &p {
            assert_eq!(desugar_for(&p1.body).unwrap(), p1.body, "{name}");
        }
    }
}

#[test]
fn gamma_fixed_below_the_least_solution_fails() {
    let p = parse_program1(&read_corpus("exp2.tl")).unwrap();
    assert!(typecheck_with_gamma(builtins(), &p, &VarTypeEnv::finite([("x", 0), ("y", 0)])).is_err());
}
