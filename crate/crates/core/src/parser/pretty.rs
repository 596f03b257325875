use std::fmt::Write;

use super::binop_precedence;
use crate::ast::{Closure, Expr, Program, Program1, Program2, Stmt, Term};
use crate::word::Word;

pub fn pretty_print(p: &Program) -> String {
    match p {
        Program::First(p) => pretty_print1(p),
        Program::Second(p) => pretty_print2(p),
    }
}

fn lit(w: &Word) -> String {
    if w.is_empty() {
        "eps".into()
    } else {
        format!("\"{w}\"")
    }
}

fn expr_prec(e: &Expr, out: &mut String, ctx: u8) {
    match e {
        Expr::Var(x) => out.push_str(x),
        Expr::Lit(w) => out.push_str(&lit(w)),
        Expr::Op(op, args) if args.len() == 2 && binop_precedence(op).is_some() => {
            let p = binop_precedence(op).unwrap();
            let paren = p < ctx;
            if paren {
                out.push('(');
            }
            expr_prec(&args[0], out, p);
            let _ = write!(out, " {op} ");
            // Left-associative: an equal-precedence right operand needs parentheses.
            expr_prec(&args[1], out, p + 1);
            if paren {
                out.push(')');
            }
        }
        Expr::Op(op, args) | Expr::OracleCall(op, args) => {
            out.push_str(op);
            out.push('(');
            list(args, out);
            out.push(')');
        }
        Expr::Declass(a, b) => {
            out.push_str("declass(");
            expr_prec(a, out, 0);
            out.push_str(", ");
            expr_prec(b, out, 0);
            out.push(')');
        }
    }
}

fn list(args: &[Expr], out: &mut String) {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        expr_prec(a, out, 0);
    }
}

pub fn pretty_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr_prec(e, &mut s, 0);
    s
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn block(s: &Stmt, out: &mut String, depth: usize) {
    out.push_str("{\n");
    stmts(s, out, depth + 1);
    out.push('\n');
    indent(out, depth);
    out.push('}');
}

fn stmts(s: &Stmt, out: &mut String, depth: usize) {
    for (i, st) in s.as_list().iter().enumerate() {
        if i > 0 {
            out.push_str(";\n");
        }
        indent(out, depth);
        stmt(st, out, depth);
    }
}

fn stmt(s: &Stmt, out: &mut String, depth: usize) {
    match s {
        Stmt::Skip => out.push_str("skip"),
        Stmt::Assign(x, e) => {
            let _ = write!(out, "{x} := {}", pretty_expr(e));
        }
        Stmt::Seq(_) => stmts(s, out, depth),
        Stmt::If(e, a, b) => {
            let _ = write!(out, "if ({}) ", pretty_expr(e));
            block(a, out, depth);
            out.push_str(" else ");
            block(b, out, depth);
        }
        Stmt::While(w) => {
            let _ = write!(out, "while ({}) ", pretty_expr(&w.guard));
            block(&w.body, out, depth);
        }
        Stmt::For { var, from, to, body } => {
            let _ = write!(out, "for {var} = {} to {} ", pretty_expr(from), pretty_expr(to));
            block(body, out, depth);
        }
        Stmt::Break(e) => {
            let _ = write!(out, "break({})", pretty_expr(e));
        }
        Stmt::OracleBreak { oracle, args, guard_vars } => {
            let mut a = String::new();
            list(args, &mut a);
            let _ = write!(out, "break(|{oracle}({a})| > |{oracle}({})|)", guard_vars.join(", "));
        }
    }
}

pub fn pretty_stmt(s: &Stmt) -> String {
    let mut out = String::new();
    stmts(s, &mut out, 0);
    out
}

fn is_simple(s: &Stmt) -> bool {
    matches!(s, Stmt::Skip | Stmt::Assign(..) | Stmt::Break(_))
}

fn body_and_return(body: &Stmt, ret: &str, out: &mut String, depth: usize) {
    if is_simple(body) && depth == 0 {
        let _ = write!(out, "{{ {} return {ret} }}", pretty_stmt(body));
        return;
    }
    out.push_str("{\n");
    stmts(body, out, depth + 1);
    out.push('\n');
    indent(out, depth + 1);
    let _ = writeln!(out, "return {ret}");
    indent(out, depth);
    out.push('}');
}

pub fn pretty_print1(p: &Program1) -> String {
    let mut out = format!("prog({})", p.params.join(", "));
    body_and_return(&p.body, &p.ret, &mut out, 0);
    out
}

fn term(t: &Term, out: &mut String) {
    match t {
        Term::Var(x) => out.push_str(x),
        Term::Call { proc, closures, args } => {
            let _ = write!(out, "call {proc}(");
            if closures.is_empty() && !args.is_empty() {
                out.push(',');
            }
            let mut first = true;
            for c in closures {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                match c {
                    Closure::OracleVar(x) => out.push_str(x),
                    Closure::Lambda(xs, body) => {
                        let _ = write!(out, "lambda({}). ", xs.join(", "));
                        term(body, out);
                    }
                }
            }
            for a in args {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                term(a, out);
            }
            out.push(')');
        }
    }
}

fn decls(order1: &[(String, usize)], order0: &[String]) -> String {
    let mut items: Vec<String> = order1.iter().map(|(x, a)| format!("{x}/{a}")).collect();
    items.extend(order0.iter().cloned());
    let joined = items.join(", ");
    if order1.is_empty() && !order0.is_empty() {
        format!(",{joined}")
    } else {
        joined
    }
}

pub fn pretty_print2(p: &Program2) -> String {
    let mut out = String::new();
    if !p.boxed_oracles.is_empty() || !p.boxed.is_empty() {
        let mut items: Vec<String> = p.boxed_oracles.iter().map(|(x, a)| format!("{x}/{a}")).collect();
        items.extend(p.boxed.iter().cloned());
        let _ = writeln!(out, "box [{}] in", items.join(", "));
    }
    for proc in &p.procedures {
        let _ = write!(out, "declare {}({}) {{\n", proc.name, decls(&proc.oracle_params, &proc.params));
        if !proc.locals.is_empty() {
            let _ = writeln!(out, "  var {};", proc.locals.join(", "));
        }
        stmts(&proc.body, &mut out, 1);
        out.push('\n');
        let _ = writeln!(out, "  return {}", proc.ret);
        out.push_str("} in\n");
    }
    term(&p.main, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Expr;
    use crate::parser::parse_str;

    #[test]
    fn minimal_canonical_text() {
        let p = Program1 { params: vec!["x".into()], body: Stmt::Skip, ret: "x".into() };
        assert_eq!(pretty_print1(&p), "prog(x){ skip return x }");
    }

    #[test]
    fn parenthesizes_by_precedence() {
        let e = Expr::op("-", vec![Expr::var("a"), Expr::op("-", vec![Expr::var("b"), Expr::var("c")])]);
        assert_eq!(pretty_expr(&e), "a - (b - c)");
        let e = Expr::op("and", vec![Expr::op("or", vec![Expr::var("a"), Expr::var("b")]), Expr::var("c")]);
        assert_eq!(pretty_expr(&e), "(a or b) and c");
    }

    #[test]
    fn round_trips() {
        for src in [
            "prog(x){ y := (x + u1) - \"1#0\"; if (y = eps) { break(y) } else { skip } return y }",
            "box [F, u] in declare p(X, a) { var b; while (a > 0) { break(|X(a)| > |X(b)|); b := truncate(X(a), a); a := a - 1 } return b } in call p(F, u)",
            "box [x] in declare p(,x){ skip return x } in call p(,x)",
        ] {
            let p = parse_str(src).unwrap();
            assert_eq!(parse_str(&pretty_print(&p)).unwrap(), p, "{}", pretty_print(&p));
        }
    }
}
