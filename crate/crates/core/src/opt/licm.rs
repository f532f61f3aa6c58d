use std::collections::{BTreeSet, HashSet};

use crate::hir::{
    assigned_vars, assigned_vars_expr, contains_label_or_jump, fold_expr_children, fold_stmt_children, Binding, Expr,
    ExprKind, Folder, HFunction, HModule, Stmt,
};
use crate::types::HType;

use super::util::{free_vars_expr, is_speculatable, let_bound_names, pure_functions};

pub fn licm_module(m: &HModule) -> HModule {
    let pure = pure_functions(m);
    let mut out = m.clone();
    for f in &mut out.functions {
        *f = licm_function(f, &pure);
    }
    out
}

/// Hoists loop-invariant speculatable subexpressions of each `While` into a
/// `Let` wrapped around the loop. Inner loops are processed first, so a
/// value hoisted out of an inner loop can move further out.
pub fn licm_function(f: &HFunction, pure_fns: &HashSet<String>) -> HFunction {
    let mut taken = let_bound_names(&f.body);
    taken.extend(f.params.iter().map(|(n, _)| n.clone()));
    let mut l = Licm { pure: pure_fns, taken, next: 0 };
    HFunction { body: l.stmt(f.body.clone()), ..f.clone() }
}

struct Licm<'a> {
    pure: &'a HashSet<String>,
    taken: BTreeSet<String>,
    next: usize,
}

impl Licm<'_> {
    fn fresh(&mut self) -> String {
        loop {
            let n = format!("licm.{}", self.next);
            self.next += 1;
            if self.taken.insert(n.clone()) {
                return n;
            }
        }
    }

    fn hoist(&mut self, cond: Expr, body: Stmt) -> Stmt {
        if contains_label_or_jump(&body) {
            return Stmt::While(cond, Box::new(body));
        }
        let mut variant = assigned_vars(&body);
        variant.extend(assigned_vars_expr(&cond));
        variant.extend(let_bound_names(&body));
        let mut cond_lets = BTreeSet::new();
        crate::hir::walk_expr(&cond, &mut |e| {
            if let ExprKind::Let(bs, ..) = &e.kind {
                cond_lets.extend(bs.iter().map(|b| b.name.clone()));
            }
        });
        variant.extend(cond_lets);
        let mut h = Hoister { pure: self.pure, variant: &variant, found: vec![] };
        let cond = h.expr(cond);
        let body = h.stmt(body);
        let found = std::mem::take(&mut h.found);
        if found.is_empty() {
            return Stmt::While(cond, Box::new(body));
        }
        let bindings = found
            .into_iter()
            .map(|(init, ty, _)| Binding { name: self.fresh(), init, ty })
            .collect::<Vec<_>>();
        // Placeholders were numbered by position in `found`.
        let names: Vec<String> = bindings.iter().map(|b| b.name.clone()).collect();
        let body = Rename { names: &names }.stmt(body);
        let cond = Rename { names: &names }.expr(cond);
        Stmt::Expr(Expr::new(ExprKind::Let(
            bindings,
            Box::new(Stmt::While(cond, Box::new(body))),
            Box::new(Expr::new(ExprKind::IntLit { bits: 0, width: 1, signed: false })),
        )))
    }
}

impl Folder for Licm<'_> {
    fn stmt(&mut self, s: Stmt) -> Stmt {
        match fold_stmt_children(self, s) {
            Stmt::While(c, b) => self.hoist(c, *b),
            s => s,
        }
    }
}

/// Placeholder variable for the k-th hoisted expression; renamed once the
/// fresh names are known.
fn placeholder(k: usize) -> String {
    format!("\u{0}licm{k}")
}

struct Hoister<'a> {
    pure: &'a HashSet<String>,
    variant: &'a BTreeSet<String>,
    found: Vec<(Expr, HType, String)>,
}

impl Hoister<'_> {
    fn invariant(&self, e: &Expr) -> bool {
        !e.is_atomic()
            && e.ty.as_ref().is_some_and(|t| *t != HType::Void)
            && is_speculatable(e, self.pure)
            && free_vars_expr(e).is_disjoint(self.variant)
    }
}

impl Folder for Hoister<'_> {
    fn expr(&mut self, e: Expr) -> Expr {
        if !self.invariant(&e) {
            return fold_expr_children(self, e);
        }
        let ty = e.ty.clone().expect("checked above");
        let name = match self.found.iter().find(|(x, ..)| *x == e) {
            Some((.., n)) => n.clone(),
            None => {
                let n = placeholder(self.found.len());
                self.found.push((e, ty.clone(), n.clone()));
                n
            }
        };
        Expr { kind: ExprKind::Var(name), ty: Some(ty) }
    }
}

struct Rename<'a> {
    names: &'a [String],
}

impl Folder for Rename<'_> {
    fn expr(&mut self, e: Expr) -> Expr {
        if let ExprKind::Var(x) = &e.kind {
            if let Some(k) = x.strip_prefix("\u{0}licm").and_then(|k| k.parse::<usize>().ok()) {
                return Expr { kind: ExprKind::Var(self.names[k].clone()), ty: e.ty };
            }
        }
        fold_expr_children(self, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hir::build::*;
    use crate::hir::{typecheck_module, walk_stmt_exprs, Rator};

    fn sum_fn() -> HFunction {
        let body = ret(let_(
            vec![binding("i", si64(0), HType::i64()), binding("s", fl64(0.0), HType::F64)],
            while_(
                icmp_slt(var("i"), var("n")),
                block(vec![
                    set("s", fadd(var("s"), load(gep(var("a"), vec![var("i")])))),
                    set("i", add(var("i"), si64(1))),
                ]),
            ),
            var("s"),
        ));
        function("sum", vec![("a", HType::ptr(HType::F64)), ("n", HType::i64())], HType::F64, body, &["pure"]).unwrap()
    }

    fn normalize(dest_index: Expr) -> HFunction {
        let body = block(vec![
            expr_stmt(let_(
                vec![binding("i", si64(0), HType::i64())],
                while_(
                    icmp_slt(var("i"), var("n")),
                    block(vec![
                        store(
                            fdiv(load(gep(var("a"), vec![var("i")])), app("sum", vec![var("a"), var("n")])),
                            gep(var("b"), vec![dest_index]),
                        ),
                        set("i", add(var("i"), si64(1))),
                    ]),
                ),
                i1(false),
            )),
            ret_void(),
        ]);
        function(
            "normalize",
            vec![("a", HType::ptr(HType::F64)), ("b", HType::ptr(HType::F64)), ("n", HType::i64())],
            HType::Void,
            body,
            &[],
        )
        .unwrap()
    }

    fn calls_in_loops(f: &HFunction) -> usize {
        let mut n = 0;
        crate::hir::walk_stmts(&f.body, &mut |s| {
            if let Stmt::While(c, b) = s {
                let mut count = |e: &Expr| n += matches!(&e.kind, ExprKind::App(Rator::Defined(_), _)) as usize;
                crate::hir::walk_expr(c, &mut count);
                walk_stmt_exprs(b, &mut count);
            }
        });
        n
    }

    #[test]
    fn pure_sum_hoisted_from_normalize() {
        let m = typecheck_module(&HModule::new("t").with(sum_fn()).unwrap().with(normalize(var("i"))).unwrap())
            .unwrap();
        assert_eq!(calls_in_loops(m.function("normalize").unwrap()), 1);
        let out = typecheck_module(&licm_module(&m)).unwrap();
        assert_eq!(calls_in_loops(out.function("normalize").unwrap()), 0);
    }

    #[test]
    fn impure_call_not_hoisted() {
        let mut s = sum_fn();
        s.attrs.clear();
        let m = typecheck_module(&HModule::new("t").with(s).unwrap().with(normalize(var("i"))).unwrap()).unwrap();
        let out = licm_module(&m);
        assert_eq!(calls_in_loops(out.function("normalize").unwrap()), 1);
    }

    #[test]
    fn set_variable_not_hoisted() {
        let body = block(vec![
            expr_stmt(let_(
                vec![binding("i", si64(0), HType::i64()), binding("k", si64(0), HType::i64())],
                while_(
                    icmp_slt(var("i"), si64(4)),
                    block(vec![set("k", mul(var("i"), si64(3))), set("i", add(var("i"), si64(1)))]),
                ),
                i1(false),
            )),
            ret_void(),
        ]);
        let f = function("f", vec![], HType::Void, body, &[]).unwrap();
        let m = typecheck_module(&HModule::new("t").with(f).unwrap()).unwrap();
        assert_eq!(licm_module(&m), m);
    }
}
