use thiserror::Error;

use crate::ast::{Expr, LoopId, Stmt, While};
use crate::word::Word;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("for-loop variable `{var}` occurs in the loop body")]
pub struct DesugarError {
    pub var: String,
}

/// Rewrites `for x = e to d {s}` into `x := d; while (x >= e) {s; x := x - 1}`.
///
/// New loops get id 0; callers renumber with `assign_loop_ids`.
pub fn desugar_for(s: &Stmt) -> Result<Stmt, DesugarError> {
    Ok(match s {
        Stmt::For { var, from, to, body } => {
            if body.vars().contains(var) {
                return Err(DesugarError { var: var.clone() });
            }
            let body = desugar_for(body)?;
            let x = Expr::var(var);
            let step = Stmt::Assign(var.clone(), Expr::op("-", vec![x.clone(), Expr::Lit(Word::one())]));
            Stmt::seq(vec![
                Stmt::Assign(var.clone(), to.clone()),
                Stmt::While(While {
                    id: LoopId(0),
                    guard: Expr::op(">=", vec![x, from.clone()]),
                    body: Box::new(Stmt::seq(vec![body, step])),
                    from_for: true,
                }),
            ])
        }
        Stmt::Seq(items) => Stmt::seq(items.iter().map(desugar_for).collect::<Result<_, _>>()?),
        Stmt::If(e, a, b) => Stmt::If(e.clone(), Box::new(desugar_for(a)?), Box::new(desugar_for(b)?)),
        Stmt::While(w) => Stmt::While(While { body: Box::new(desugar_for(&w.body)?), ..w.clone() }),
        other => other.clone(),
    })
}
