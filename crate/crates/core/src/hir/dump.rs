//! Deterministic s-expression rendering of HIR.

use super::ast::*;
use super::module::HModule;
use crate::sexp::{format_float, Sexp};
use crate::types::HType;

fn s(x: &str) -> Sexp {
    Sexp::sym(x)
}

fn rator_to_sexp(r: &Rator) -> Sexp {
    match r {
        Rator::Defined(n) => s(n),
        Rator::Intrinsic(n, sig) => Sexp::list([s("intrinsic"), s(n), sig.to_sexp()]),
        Rator::External(n, sig) => Sexp::list([s("external"), s(n), sig.to_sexp()]),
        Rator::Host(n, sig) => Sexp::list([s("host"), s(n), sig.to_sexp()]),
    }
}

pub fn expr_to_sexp(e: &Expr) -> Sexp {
    match &e.kind {
        ExprKind::Var(n) => s(n),
        ExprKind::IntLit { bits, width, signed } => {
            let v = if *signed {
                crate::ops::sign_extend(*width, *bits) as i128
            } else {
                *bits as i128
            };
            Sexp::list([s(if *signed { "sint" } else { "uint" }), HType::Int(*width).to_sexp(), Sexp::Int(v)])
        }
        ExprKind::FloatLit { bits, ty } => {
            let v = if *ty == HType::F32 { f32::from_bits(*bits as u32) as f64 } else { f64::from_bits(*bits) };
            Sexp::list([s(if *ty == HType::F32 { "fl32" } else { "fl64" }), s(&format_float(v))])
        }
        ExprKind::SymLit(t) => Sexp::list([s("sym"), s(t)]),
        ExprKind::BoolLit(b) => Sexp::Bool(*b),
        ExprKind::GlobalAddr(n) => Sexp::list([s("global-addr"), s(n)]),
        ExprKind::App(r, args) => {
            let mut v = vec![s("app"), rator_to_sexp(r)];
            v.extend(args.iter().map(expr_to_sexp));
            Sexp::List(v)
        }
        ExprKind::Let(bs, body, result) => Sexp::list([
            s("let"),
            Sexp::List(
                bs.iter()
                    .map(|b| Sexp::list([s(&b.name), expr_to_sexp(&b.init), b.ty.to_sexp()]))
                    .collect(),
            ),
            stmt_to_sexp(body),
            expr_to_sexp(result),
        ]),
        ExprKind::Gep(base, idx) => {
            let mut v = vec![s("gep"), expr_to_sexp(base)];
            v.extend(idx.iter().map(expr_to_sexp));
            Sexp::List(v)
        }
        ExprKind::Load(a) => Sexp::list([s("load"), expr_to_sexp(a)]),
        ExprKind::Cast(k, a, t) => Sexp::list([s("cast"), s(k.name()), expr_to_sexp(a), t.to_sexp()]),
        ExprKind::Prim(op, args) => {
            let mut v = vec![s(op.name())];
            v.extend(args.iter().map(expr_to_sexp));
            Sexp::List(v)
        }
    }
}

pub fn stmt_to_sexp(st: &Stmt) -> Sexp {
    match st {
        Stmt::Expr(e) => Sexp::list([s("expr"), expr_to_sexp(e)]),
        Stmt::Block(ss) => {
            let mut v = vec![s("block")];
            v.extend(ss.iter().map(stmt_to_sexp));
            Sexp::List(v)
        }
        Stmt::Void => Sexp::list([s("void")]),
        Stmt::Return(None) => Sexp::list([s("return")]),
        Stmt::Return(Some(e)) => Sexp::list([s("return"), expr_to_sexp(e)]),
        Stmt::While(c, b) => Sexp::list([s("while"), expr_to_sexp(c), stmt_to_sexp(b)]),
        Stmt::If(c, t, e) => Sexp::list([s("if"), expr_to_sexp(c), stmt_to_sexp(t), stmt_to_sexp(e)]),
        Stmt::Set(n, e) => Sexp::list([s("set"), s(n), expr_to_sexp(e)]),
        Stmt::Switch(e, cases, d) => Sexp::list([
            s("switch"),
            expr_to_sexp(e),
            Sexp::List(cases.iter().map(|(c, b)| Sexp::list([expr_to_sexp(c), stmt_to_sexp(b)])).collect()),
            stmt_to_sexp(d),
        ]),
        Stmt::Label(n, b) => Sexp::list([s("label"), s(n), stmt_to_sexp(b)]),
        Stmt::Jump(n) => Sexp::list([s("jump"), s(n)]),
        Stmt::Store(v, a) => Sexp::list([s("store"), expr_to_sexp(v), expr_to_sexp(a)]),
    }
}

pub fn function_to_sexp(f: &HFunction) -> Sexp {
    let mut v = vec![
        s("function"),
        s(&f.name),
        Sexp::List(f.params.iter().map(|(n, t)| Sexp::list([s(n), t.to_sexp()])).collect()),
        f.ret.to_sexp(),
    ];
    if !f.attrs.is_empty() {
        let mut a = vec![s("attrs")];
        a.extend(f.attrs.iter().map(|x| s(x)));
        v.push(Sexp::List(a));
    }
    v.push(stmt_to_sexp(&f.body));
    Sexp::List(v)
}

pub fn module_to_sexp(m: &HModule) -> Sexp {
    let mut v = vec![s("module"), s(&m.name)];
    for (n, t) in &m.type_defs {
        v.push(Sexp::list([s("type"), s(n), t.to_sexp()]));
    }
    for g in &m.globals {
        let mut item = vec![s("global"), s(&g.name), g.ty.to_sexp()];
        item.extend(g.init.iter().map(expr_to_sexp));
        v.push(Sexp::List(item));
    }
    v.extend(m.functions.iter().map(function_to_sexp));
    Sexp::List(v)
}

/// Multi-line text dump of a module.
pub fn dump_module(m: &HModule) -> String {
    let mut text = module_to_sexp(m).pretty(100);
    text.push('\n');
    text
}

impl std::fmt::Display for HModule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&dump_module(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hir::build::*;

    #[test]
    fn pow_dump() {
        let f = pow_function();
        assert_eq!(
            function_to_sexp(&f).to_string(),
            "(function pow ((x i64) (n i64)) i64 (if (icmp-ule n (uint i64 0)) (return (uint i64 1)) \
             (return (mul x (app pow x (sub-nuw n (uint i64 1)))))))"
        );
    }

    #[test]
    fn literals() {
        assert_eq!(expr_to_sexp(&si64(-3)).to_string(), "(sint i64 -3)");
        assert_eq!(expr_to_sexp(&fl32(0.5)).to_string(), "(fl32 0.5)");
        assert_eq!(expr_to_sexp(&sym("c")).to_string(), "(sym c)");
    }
}
