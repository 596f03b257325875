use std::path::PathBuf;

use tierlang::ast::Level;
use tierlang::interp1::{run_program, ExecConfig, RuntimeStop};
use tierlang::parser::parse_program1;
use tierlang::safety1::{check_derivation, check_for_program, infer_safety};
use tierlang::word::Word;

fn corpus(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn w(s: &str) -> Word {
    s.parse().unwrap()
}

#[test]
fn bubble_levels_split_in_two() {
    let p = parse_program1(&corpus("bubble.tl")).unwrap();
    let inf = infer_safety(&p).unwrap();
    assert!(check_derivation(&p, &inf.gamma, &inf.derivation));
    let lv = |x: &str| inf.gamma.get(x).unwrap();
    for hi in ["list", "list1", "len1", "len2"] {
        for lo in ["list2", "len", "x", "y", "r"] {
            assert!(lv(hi) > lv(lo), "{hi} {lo} {:?}", inf.gamma);
        }
    }
}

#[test]
fn bubble_sorts() {
    let p = parse_program1(&corpus("bubble.tl")).unwrap();
    let out = run_program(&p, &[w("1100")], ExecConfig { budget: 1_000_000, monitor: true }).unwrap();
    assert_eq!(out.value, w("0011"));
}

#[test]
fn corpus_verdicts() {
    for (name, safe, for_prog) in [
        ("bubble.tl", true, false),
        ("bubble_for.tl", true, true),
        ("mult_for.tl", true, true),
        ("exp1.tl", true, false),
        ("exp2.tl", true, false),
        ("inc_loop.tl", false, false),
    ] {
        let p = parse_program1(&corpus(name)).unwrap();
        let inf = infer_safety(&p);
        assert_eq!(inf.is_ok(), safe, "{name}: {inf:?}");
        if let Ok(inf) = inf {
            assert!(check_derivation(&p, &inf.gamma, &inf.derivation), "{name}");
        }
        assert_eq!(check_for_program(&p), for_prog, "{name}");
    }
}

#[test]
fn exp2_levels_and_violation() {
    let p = parse_program1(&corpus("exp2.tl")).unwrap();
    let inf = infer_safety(&p).unwrap();
    assert_eq!(inf.gamma.get("x"), Some(Level::Fin(1)));
    assert_eq!(inf.gamma.get("y"), Some(Level::Fin(0)));
    match run_program(&p, &[w("100")], ExecConfig { budget: 10_000, monitor: true }) {
        Err(RuntimeStop::AperiodicityViolation(v)) => assert_eq!(v.iteration, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn for_programs_compute() {
    let p = parse_program1(&corpus("mult_for.tl")).unwrap();
    let out = run_program(&p, &[w("111"), w("11")], ExecConfig { budget: 100_000, monitor: true }).unwrap();
    assert_eq!(out.value, w("111111"));
    let p = parse_program1(&corpus("bubble_for.tl")).unwrap();
    let out = run_program(&p, &[w("1010")], ExecConfig { budget: 100_000, monitor: true }).unwrap();
    assert_eq!(out.value, w("0011"));
}
