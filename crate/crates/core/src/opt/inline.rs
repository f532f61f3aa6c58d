use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::hir::{
    contains_label_or_jump, fold_expr_children, fold_stmt_children, walk_stmt_exprs, walk_stmts, Binding, Expr, ExprKind, Folder, HFunction,
    HModule, Rator, Stmt,
};
use crate::ops::Value;
use crate::types::HType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("always-inline functions call each other in a cycle: {}", .0.join(" -> "))]
pub struct InlineCycle(pub Vec<String>);

/// Replaces calls to always-inline functions by their bodies, with the
/// parameters bound by `Let`. Callees whose `Return`s are not all in tail
/// position are left as calls.
pub fn inline_always(m: &HModule) -> Result<HModule, InlineCycle> {
    let order = inline_order(m)?;
    let mut out = m.clone();
    let mut counter = 0usize;
    for name in &order {
        let Some(f) = out.function(name).cloned() else { continue };
        let body = Inliner { module: &out, counter: &mut counter }.stmt(f.body.clone());
        if let Some(g) = out.function_mut(name) {
            g.body = body;
        }
    }
    let names: Vec<String> =
        out.functions.iter().filter(|f| !f.is_always_inline()).map(|f| f.name.clone()).collect();
    for name in names {
        let f = out.function(&name).cloned().expect("function exists");
        let body = Inliner { module: &out, counter: &mut counter }.stmt(f.body);
        out.function_mut(&name).expect("function exists").body = body;
    }
    Ok(out)
}

fn callees(f: &HFunction) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk_stmt_exprs(&f.body, &mut |e| {
        if let ExprKind::App(Rator::Defined(g), _) = &e.kind {
            out.insert(g.clone());
        }
    });
    out
}

/// Always-inline functions in callee-first order.
fn inline_order(m: &HModule) -> Result<Vec<String>, InlineCycle> {
    let ai: Vec<&HFunction> = m.functions.iter().filter(|f| f.is_always_inline()).collect();
    let edges: HashMap<&str, Vec<String>> = ai
        .iter()
        .map(|f| {
            let cs = callees(f).into_iter().filter(|c| m.function(c).is_some_and(|g| g.is_always_inline())).collect();
            (f.name.as_str(), cs)
        })
        .collect();
    let mut state: HashMap<&str, u8> = HashMap::new();
    let mut order = vec![];
    fn visit<'a>(
        n: &'a str,
        edges: &'a HashMap<&str, Vec<String>>,
        state: &mut HashMap<&'a str, u8>,
        path: &mut Vec<String>,
        order: &mut Vec<String>,
    ) -> Result<(), InlineCycle> {
        match state.get(n) {
            Some(2) => return Ok(()),
            Some(1) => {
                let start = path.iter().position(|p| p == n).unwrap_or(0);
                let mut cycle = path[start..].to_vec();
                cycle.push(n.to_string());
                return Err(InlineCycle(cycle));
            }
            _ => {}
        }
        state.insert(n, 1);
        path.push(n.to_string());
        for c in &edges[n] {
            visit(c, edges, state, path, order)?;
        }
        path.pop();
        state.insert(n, 2);
        order.push(n.to_string());
        Ok(())
    }
    for f in &ai {
        visit(&f.name, &edges, &mut state, &mut vec![], &mut order)?;
    }
    Ok(order)
}

struct Inliner<'a> {
    module: &'a HModule,
    counter: &'a mut usize,
}

impl Folder for Inliner<'_> {
    fn expr(&mut self, e: Expr) -> Expr {
        let e = fold_expr_children(self, e);
        if let ExprKind::App(Rator::Defined(g), args) = &e.kind {
            if let Some(callee) = self.module.function(g).filter(|f| f.is_always_inline()) {
                if let Some(x) = inline_call(callee, args.clone(), self.counter) {
                    return x;
                }
            }
        }
        e
    }

    fn stmt(&mut self, s: Stmt) -> Stmt {
        fold_stmt_children(self, s)
    }
}

fn zero_literal(t: &HType) -> Option<Expr> {
    match t {
        HType::Int(_) | HType::F32 | HType::F64 | HType::HostBool => Expr::from_value(Value::zero_of(t)),
        _ => None,
    }
}

fn unit_literal() -> Expr {
    Expr::new(ExprKind::IntLit { bits: 0, width: 1, signed: false })
}

fn contains_return(s: &Stmt) -> bool {
    let mut found = false;
    walk_stmts(s, &mut |s| found |= matches!(s, Stmt::Return(_)));
    found
}

/// Rewrites tail `Return`s into assignments to `rv` (or drops them for
/// void callees). Fails if a `Return` is not in tail position.
fn tail_to_set(s: Stmt, rv: Option<&str>) -> Option<Stmt> {
    Some(match s {
        Stmt::Return(e) => match (e, rv) {
            (Some(e), Some(rv)) => Stmt::Set(rv.to_string(), e),
            (None, None) => Stmt::Void,
            _ => return None,
        },
        Stmt::Block(mut ss) => {
            let last = ss.pop();
            if ss.iter().any(contains_return) {
                return None;
            }
            if let Some(last) = last {
                ss.push(tail_to_set(last, rv)?);
            }
            Stmt::Block(ss)
        }
        Stmt::If(c, t, e) => Stmt::If(c, Box::new(tail_to_set(*t, rv)?), Box::new(tail_to_set(*e, rv)?)),
        Stmt::Switch(x, cases, d) => {
            let cases = cases.into_iter().map(|(c, s)| Some((c, tail_to_set(s, rv)?))).collect::<Option<_>>()?;
            Stmt::Switch(x, cases, Box::new(tail_to_set(*d, rv)?))
        }
        s if contains_return(&s) => return None,
        s => s,
    })
}

fn inline_call(callee: &HFunction, args: Vec<Expr>, counter: &mut usize) -> Option<Expr> {
    if contains_label_or_jump(&callee.body) {
        return None;
    }
    let params: Vec<Binding> = callee
        .params
        .iter()
        .zip(args)
        .map(|((n, t), a)| Binding { name: n.clone(), init: a, ty: t.clone() })
        .collect();
    let wrap = |bs: Vec<Binding>, body: Stmt, result: Expr| Expr::new(ExprKind::Let(bs, Box::new(body), Box::new(result)));
    // A body that ends in its only return needs no result variable.
    if let Stmt::Block(ss) = &callee.body {
        if let Some((Stmt::Return(Some(e)), prefix)) = ss.split_last() {
            if !prefix.iter().any(contains_return) {
                return Some(wrap(params, Stmt::Block(prefix.to_vec()), e.clone()));
            }
        }
    }
    if let Stmt::Return(Some(e)) = &callee.body {
        return Some(wrap(params, Stmt::Void, e.clone()));
    }
    if callee.ret == HType::Void {
        let body = tail_to_set(callee.body.clone(), None)?;
        return Some(wrap(params, body, unit_literal()));
    }
    let zero = zero_literal(&callee.ret)?;
    *counter += 1;
    let rv = format!("{}.ret.{}", callee.name, *counter - 1);
    let body = tail_to_set(callee.body.clone(), Some(&rv))?;
    let inner = wrap(
        vec![Binding { name: rv.clone(), init: zero, ty: callee.ret.clone() }],
        body,
        Expr::new(ExprKind::Var(rv)),
    );
    Some(wrap(params, Stmt::Void, inner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hir::build::*;
    use crate::hir::typecheck_module;

    #[test]
    fn cycle_detected() {
        let f = function("f", vec![("n", HType::i64())], HType::i64(), ret(app("f", vec![var("n")])), &["always-inline"])
            .unwrap();
        let m = HModule::new("t").with(f).unwrap();
        assert_eq!(inline_always(&m).unwrap_err(), InlineCycle(vec!["f".into(), "f".into()]));
    }

    #[test]
    fn plain_calls_untouched() {
        let g = function("g", vec![], HType::i64(), ret(ui64(1)), &[]).unwrap();
        let f = function("f", vec![], HType::i64(), ret(app("g", vec![])), &[]).unwrap();
        let m = typecheck_module(&HModule::new("t").with(g).unwrap().with(f).unwrap()).unwrap();
        assert_eq!(inline_always(&m).unwrap(), m);
    }

    #[test]
    fn branching_callee_uses_result_var() {
        let abs = function(
            "abs",
            vec![("x", HType::i64())],
            HType::i64(),
            if_(icmp_slt(var("x"), si64(0)), ret(sub(si64(0), var("x"))), ret(var("x"))),
            &["always-inline"],
        )
        .unwrap();
        let f = function("f", vec![("y", HType::i64())], HType::i64(), ret(app("abs", vec![var("y")])), &[]).unwrap();
        let m = typecheck_module(&HModule::new("t").with(abs).unwrap().with(f).unwrap()).unwrap();
        let out = typecheck_module(&inline_always(&m).unwrap()).unwrap();
        let mut calls = 0;
        walk_stmt_exprs(&out.function("f").unwrap().body, &mut |e| {
            calls += matches!(e.kind, ExprKind::App(..)) as usize;
        });
        assert_eq!(calls, 0);
    }
}
