use std::collections::{BTreeSet, HashSet};

use crate::hir::{fold_expr_children, fold_stmt_children, Expr, ExprKind, Folder, Rator, Stmt};
use crate::intrinsics;
use crate::ops::PrimOp;

/// Free variables of an expression, respecting `Let` scopes.
pub fn free_vars_expr(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fv_expr(e, &mut Vec::new(), &mut out);
    out
}

/// Free variables of a statement, including names assigned by `Set`.
pub fn free_vars_stmt(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fv_stmt(s, &mut Vec::new(), &mut out);
    out
}

fn fv_expr(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match &e.kind {
        ExprKind::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        ExprKind::Let(bs, body, result) => {
            for b in bs {
                fv_expr(&b.init, bound, out);
            }
            let depth = bound.len();
            bound.extend(bs.iter().map(|b| b.name.clone()));
            fv_stmt(body, bound, out);
            fv_expr(result, bound, out);
            bound.truncate(depth);
        }
        ExprKind::App(_, args) | ExprKind::Prim(_, args) => args.iter().for_each(|a| fv_expr(a, bound, out)),
        ExprKind::Gep(base, idx) => {
            fv_expr(base, bound, out);
            idx.iter().for_each(|a| fv_expr(a, bound, out));
        }
        ExprKind::Load(a) | ExprKind::Cast(_, a, _) => fv_expr(a, bound, out),
        _ => {}
    }
}

fn fv_stmt(s: &Stmt, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match s {
        Stmt::Expr(e) | Stmt::Return(Some(e)) => fv_expr(e, bound, out),
        Stmt::Set(x, e) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
            fv_expr(e, bound, out);
        }
        Stmt::Block(ss) => ss.iter().for_each(|s| fv_stmt(s, bound, out)),
        Stmt::While(c, b) => {
            fv_expr(c, bound, out);
            fv_stmt(b, bound, out);
        }
        Stmt::If(c, t, e) => {
            fv_expr(c, bound, out);
            fv_stmt(t, bound, out);
            fv_stmt(e, bound, out);
        }
        Stmt::Switch(e, cases, d) => {
            fv_expr(e, bound, out);
            cases.iter().for_each(|(_, s)| fv_stmt(s, bound, out));
            fv_stmt(d, bound, out);
        }
        Stmt::Label(_, b) => fv_stmt(b, bound, out),
        Stmt::Store(v, a) => {
            fv_expr(v, bound, out);
            fv_expr(a, bound, out);
        }
        Stmt::Void | Stmt::Return(None) | Stmt::Jump(_) => {}
    }
}

/// Replaces free occurrences of `name` with `value`, which must be closed
/// (no free variables), so no capture can occur.
pub struct Substitute<'a> {
    name: &'a str,
    value: &'a Expr,
}

impl Folder for Substitute<'_> {
    fn expr(&mut self, e: Expr) -> Expr {
        match e.kind {
            ExprKind::Var(ref x) if x == self.name => {
                let mut v = self.value.clone();
                if v.ty.is_none() {
                    v.ty = e.ty;
                }
                v
            }
            ExprKind::Let(bs, body, result) if bs.iter().any(|b| b.name == self.name) => {
                let bs = bs.into_iter().map(|b| crate::hir::Binding { init: self.expr(b.init), ..b }).collect();
                Expr { kind: ExprKind::Let(bs, body, result), ty: e.ty }
            }
            kind => fold_expr_children(self, Expr { kind, ty: e.ty }),
        }
    }

    fn stmt(&mut self, s: Stmt) -> Stmt {
        fold_stmt_children(self, s)
    }
}

pub fn substitute(s: Stmt, name: &str, value: &Expr) -> Stmt {
    Substitute { name, value }.stmt(s)
}

pub fn substitute_expr(e: Expr, name: &str, value: &Expr) -> Expr {
    Substitute { name, value }.expr(e)
}

/// Whether evaluating `e` can have no side effects and can never trap, so
/// it may be evaluated early, repeatedly, or not at all. Loads and `Let`
/// are rejected; calls must go to pure intrinsics or to module functions
/// in `pure_fns`.
pub fn is_speculatable(e: &Expr, pure_fns: &HashSet<String>) -> bool {
    match &e.kind {
        ExprKind::Var(_)
        | ExprKind::IntLit { .. }
        | ExprKind::FloatLit { .. }
        | ExprKind::SymLit(_)
        | ExprKind::BoolLit(_)
        | ExprKind::GlobalAddr(_) => true,
        ExprKind::Prim(op, args) => {
            let safe_op = match op {
                _ if op.is_division() && !op.is_float_arith() => {
                    args.get(1).and_then(|d| d.literal_value()).and_then(|v| v.as_bits()).is_some_and(|b| b != 0)
                }
                PrimOp::SubNuw => false,
                _ => true,
            };
            safe_op && args.iter().all(|a| is_speculatable(a, pure_fns))
        }
        ExprKind::Cast(_, a, _) => is_speculatable(a, pure_fns),
        ExprKind::Gep(b, idx) => is_speculatable(b, pure_fns) && idx.iter().all(|a| is_speculatable(a, pure_fns)),
        ExprKind::App(r, args) => {
            let ok = match r {
                Rator::Intrinsic(n, _) => intrinsics::is_pure(n),
                Rator::Defined(n) => pure_fns.contains(n),
                _ => false,
            };
            ok && args.iter().all(|a| is_speculatable(a, pure_fns))
        }
        ExprKind::Load(_) | ExprKind::Let(..) => false,
    }
}

/// Names of module functions tagged `pure`.
pub fn pure_functions(m: &crate::hir::HModule) -> HashSet<String> {
    m.functions.iter().filter(|f| f.is_pure()).map(|f| f.name.clone()).collect()
}

/// Names bound by `Let` anywhere inside a statement.
pub fn let_bound_names(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    crate::hir::walk_stmt_exprs(s, &mut |e| {
        if let ExprKind::Let(bs, ..) = &e.kind {
            out.extend(bs.iter().map(|b| b.name.clone()));
        }
    });
    out
}
