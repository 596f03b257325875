use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tierlang");

fn corpus(name: &str) -> String {
    format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let (code, out) = run(&all);
    (code, serde_json::from_str(&out).unwrap())
}

fn validator() -> jsonschema::Validator {
    let text = std::fs::read_to_string(format!("{}/../../report.schema.json", env!("CARGO_MANIFEST_DIR"))).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

#[test]
fn check_exit_codes() {
    assert_eq!(run(&["check", &corpus("bubble.tl")]).0, 0);
    assert_eq!(run(&["check", &corpus("inc_loop.tl")]).0, 1);
    assert_eq!(run(&["check", &corpus("I.tl2")]).0, 0);
    assert_eq!(run(&["check", &corpus("missing.tl")]).0, 4);
}

#[test]
fn parse_errors_exit_2() {
    let dir = std::env::temp_dir().join(format!("tierlang-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("bad.tl");
    std::fs::write(&f, "prog(x){ x := ; return x }").unwrap();
    let (code, v) = json(&["check", f.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(v["error"]["kind"], "parse");
}

#[test]
fn run_bubble_and_exp2() {
    let (code, v) = json(&["run", &corpus("bubble.tl"), "--input", "list=1100", "--monitor"]);
    assert_eq!((code, v["result"].as_str()), (0, Some("0011")));
    let (code, v) = json(&["run", &corpus("exp2.tl"), "--input", "y=100", "--monitor"]);
    assert_eq!(code, 3);
    assert_eq!(v["error"]["subcode"], "AperiodicityViolation");
    assert_eq!((v["violation"]["line"].as_u64(), v["violation"]["iteration"].as_u64()), (Some(3), Some(2)));
    let (code, _) = run(&["run", &corpus("exp2.tl"), "--input", "y=100", "--max-steps", "20"]);
    assert_eq!(code, 3);
}

#[test]
fn missing_input_defaults_to_empty_with_a_warning() {
    let out = Command::new(BIN).args(["run", &corpus("bubble.tl")]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("list"));
}

#[test]
fn forcheck_verdicts() {
    assert_eq!(run(&["forcheck", &corpus("bubble_for.tl")]).0, 0);
    assert_eq!(run(&["forcheck", &corpus("bubble.tl")]).0, 1);
    assert_eq!(run(&["forcheck", &corpus("exp2.tl")]).0, 1);
}

#[test]
fn delta_config_can_make_bubble_unsafe() {
    let dir = std::env::temp_dir().join(format!("tierlang-delta-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("delta.json");
    std::fs::write(&f, r#"{"forbidden": {">": [["*", "*", "*"]]}}"#).unwrap();
    assert_eq!(run(&["check", &corpus("bubble.tl"), "--delta", f.to_str().unwrap()]).0, 1);
}

#[test]
fn ops_listing_and_validation() {
    let (code, v) = json(&["ops", "--validate", "200"]);
    assert_eq!(code, 0);
    assert_eq!(v["operators"].as_array().unwrap().len(), 24);
    assert_eq!(v["verdicts"]["validation"], true);
}

#[test]
fn desugar_prints_while_form() {
    let (code, out) = run(&["desugar", &corpus("bubble_for.tl")]);
    assert_eq!(code, 0);
    assert!(out.contains("while") && !out.contains("for "));
}

#[test]
fn second_order_run() {
    let (code, v) = json(&["run", &corpus("I.tl2"), "--oracle", "F=builtin:append1", "--input", "u=1", "--input", "v=1111", "--input", "w=111"]);
    assert_eq!((code, v["result"].as_str()), (0, Some("1111")));
}

#[test]
fn reports_match_the_schema() {
    let schema = validator();
    let bad = std::env::temp_dir().join("tierlang-no-such-file.tl");
    let cases: Vec<Vec<String>> = vec![
        vec!["check".into(), corpus("bubble.tl")],
        vec!["check".into(), corpus("inc_loop.tl")],
        vec!["check".into(), corpus("I.tl2")],
        vec!["check".into(), bad.display().to_string()],
        vec!["run".into(), corpus("exp2.tl"), "--input".into(), "y=100".into(), "--monitor".into()],
        vec!["run".into(), corpus("I.tl2"), "--oracle".into(), "F=builtin:double".into()],
        vec!["forcheck".into(), corpus("bubble_for.tl")],
        vec!["ops".into(), "--validate".into(), "10".into()],
        vec!["desugar".into(), corpus("mult_for.tl")],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (_, v) = json(&args);
        let errors: Vec<String> = schema.iter_errors(&v).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:?}");
    }
}
