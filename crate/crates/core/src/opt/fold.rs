use std::collections::{HashMap, HashSet};

use crate::hir::{
    assigned_vars, assigned_vars_expr, contains_label, fold_expr_children, fold_stmt_children, Expr, ExprKind,
    Folder, HFunction, HModule, Rator, Stmt,
};
use crate::intrinsics;
use crate::lir::{Const, Instr, LFunction, LModule, Op, Reg};
use crate::ops::{eval_cast, eval_prim, PrimOp, Value};
use crate::types::HType;

use super::util::{is_speculatable, substitute, substitute_expr};

/// Upper bound on fold rounds per function; each round is a full
/// bottom-up rewrite.
const MAX_ROUNDS: usize = 64;

pub fn fold_module(m: &HModule) -> HModule {
    let mut out = m.clone();
    for f in &mut out.functions {
        *f = fold_function(f);
    }
    out
}

/// Folds literal arithmetic, algebraic identities, constant control flow
/// and never-assigned literal `Let` bindings, repeating until stable.
pub fn fold_function(f: &HFunction) -> HFunction {
    let mut body = f.body.clone();
    for _ in 0..MAX_ROUNDS {
        let next = Fold.stmt(body.clone());
        if next == body {
            break;
        }
        body = next;
    }
    HFunction { body, ..f.clone() }
}

/// Folds a single expression until stable.
pub(crate) fn fold_expr(mut e: Expr) -> Expr {
    for _ in 0..MAX_ROUNDS {
        let next = Fold.expr(e.clone());
        if next == e {
            break;
        }
        e = next;
    }
    e
}

struct Fold;

fn int_lit_value(e: &Expr) -> Option<u64> {
    match &e.kind {
        ExprKind::IntLit { bits, .. } => Some(*bits),
        _ => None,
    }
}

/// Expression that can be dropped without changing behavior.
fn droppable(e: &Expr) -> bool {
    is_speculatable(e, &HashSet::new())
}

fn propagatable(e: &Expr) -> bool {
    e.is_literal() || matches!(e.kind, ExprKind::GlobalAddr(_))
}

impl Folder for Fold {
    fn expr(&mut self, e: Expr) -> Expr {
        let e = fold_expr_children(self, e);
        let ty = e.ty.clone();
        match e.kind {
            ExprKind::Prim(op, args) => fold_prim(op, args, ty),
            ExprKind::App(Rator::Intrinsic(name, sig), args) => {
                if let Some(lit) = fold_math(&name, &args) {
                    return lit;
                }
                Expr { kind: ExprKind::App(Rator::Intrinsic(name, sig), args), ty }
            }
            ExprKind::Cast(k, a, to) => {
                if let Some(v) = a.literal_value().and_then(|v| eval_cast(k, v, &to)) {
                    if let Some(lit) = Expr::from_value(v) {
                        return lit;
                    }
                }
                Expr { kind: ExprKind::Cast(k, a, to), ty }
            }
            ExprKind::Let(bs, body, result) => {
                let mut body = *body;
                let mut result = *result;
                let assigned: HashSet<String> =
                    assigned_vars(&body).into_iter().chain(assigned_vars_expr(&result)).collect();
                let mut keep = Vec::with_capacity(bs.len());
                for b in bs {
                    if propagatable(&b.init) && !assigned.contains(&b.name) {
                        let mut v = b.init.clone();
                        v.ty = Some(b.ty.clone());
                        body = substitute(body, &b.name, &v);
                        result = substitute_expr(result, &b.name, &v);
                    } else {
                        keep.push(b);
                    }
                }
                if keep.is_empty() && body == Stmt::Void {
                    return result;
                }
                Expr { kind: ExprKind::Let(keep, Box::new(body), Box::new(result)), ty }
            }
            kind => Expr { kind, ty },
        }
    }

    fn stmt(&mut self, s: Stmt) -> Stmt {
        let s = fold_stmt_children(self, s);
        match s {
            Stmt::If(c, t, e) => match c.const_truth() {
                Some(true) if !contains_label(&e) => *t,
                Some(false) if !contains_label(&t) => *e,
                _ => Stmt::If(c, t, e),
            },
            Stmt::Switch(x, cases, d) => {
                let Some(k) = case_key(&x) else {
                    return Stmt::Switch(x, cases, d);
                };
                let hit = cases.iter().position(|(c, _)| case_key(c).as_ref() == Some(&k));
                let discarded_label = cases.iter().enumerate().any(|(i, (_, s))| Some(i) != hit && contains_label(s))
                    || (hit.is_some() && contains_label(&d));
                if discarded_label {
                    return Stmt::Switch(x, cases, d);
                }
                match hit {
                    Some(i) => cases.into_iter().nth(i).map(|(_, s)| s).unwrap_or(Stmt::Void),
                    None => *d,
                }
            }
            Stmt::While(c, b) if c.const_truth() == Some(false) && !contains_label(&b) => Stmt::Void,
            Stmt::Block(ss) => {
                let mut out = Vec::with_capacity(ss.len());
                for s in ss {
                    match s {
                        Stmt::Void => {}
                        Stmt::Block(inner) => out.extend(inner),
                        s => out.push(s),
                    }
                }
                match out.len() {
                    0 => Stmt::Void,
                    1 => out.pop().unwrap_or(Stmt::Void),
                    _ => Stmt::Block(out),
                }
            }
            s => s,
        }
    }
}

#[derive(PartialEq)]
enum CaseKey {
    Num(Value),
    Sym(String),
}

fn case_key(e: &Expr) -> Option<CaseKey> {
    match &e.kind {
        ExprKind::SymLit(s) => Some(CaseKey::Sym(s.clone())),
        _ => e.literal_value().map(CaseKey::Num),
    }
}

/// A pure math intrinsic applied to a literal, evaluated the way the
/// interpreter would.
fn fold_math(name: &str, args: &[Expr]) -> Option<Expr> {
    if !intrinsics::is_pure(name) {
        return None;
    }
    let v = match args {
        [a] => a.literal_value()?,
        _ => return None,
    };
    let out = match v {
        Value::F32(_) => Value::f32(intrinsics::apply_math_f32(name, v.as_f32()?)?),
        Value::F64(_) => Value::f64(intrinsics::apply_math(name, v.as_f64()?)?),
        _ => return None,
    };
    Expr::from_value(out)
}

fn fold_prim(op: PrimOp, args: Vec<Expr>, ty: Option<HType>) -> Expr {
    if args.len() == 2 {
        if let (Some(a), Some(b)) = (args[0].literal_value(), args[1].literal_value()) {
            if let Some(Ok(v)) = eval_prim(op, a, b) {
                if let Some(lit) = Expr::from_value(v) {
                    return lit;
                }
            }
        }
        let is_int = args[0].ty.as_ref().is_some_and(|t| t.is_int()) || int_lit_value(&args[0]).is_some();
        if is_int {
            let (l, r) = (int_lit_value(&args[0]), int_lit_value(&args[1]));
            match op {
                PrimOp::Add | PrimOp::Or | PrimOp::Xor if r == Some(0) => return args.into_iter().next().unwrap(),
                PrimOp::Add | PrimOp::Or | PrimOp::Xor if l == Some(0) => return args.into_iter().nth(1).unwrap(),
                PrimOp::Sub | PrimOp::Shl | PrimOp::LShr | PrimOp::AShr if r == Some(0) => {
                    return args.into_iter().next().unwrap()
                }
                PrimOp::Mul if r == Some(1) => return args.into_iter().next().unwrap(),
                PrimOp::Mul if l == Some(1) => return args.into_iter().nth(1).unwrap(),
                PrimOp::Mul | PrimOp::And if r == Some(0) && droppable(&args[0]) => {
                    return args.into_iter().nth(1).unwrap()
                }
                PrimOp::Mul | PrimOp::And if l == Some(0) && droppable(&args[1]) => {
                    return args.into_iter().next().unwrap()
                }
                _ => {}
            }
        }
    }
    Expr { kind: ExprKind::Prim(op, args), ty }
}

pub fn fold_module_lir(m: &LModule) -> LModule {
    LModule { functions: m.functions.iter().map(fold_function_lir).collect(), ..m.clone() }
}

fn const_of(c: &Const, ty: &HType) -> Option<Value> {
    Some(match (c, ty) {
        (Const::Int(b), HType::Int(w)) => Value::Int { width: *w, bits: crate::ops::mask(*w, *b) },
        (Const::Float(b), HType::F32) => Value::F32(*b as u32),
        (Const::Float(b), HType::F64) => Value::F64(*b),
        (Const::Bool(b), _) => Value::Bool(*b),
        _ => return None,
    })
}

fn value_const(v: Value) -> Option<Const> {
    Some(match v {
        Value::Int { bits, .. } => Const::Int(bits),
        Value::F32(b) => Const::Float(b as u64),
        Value::F64(b) => Const::Float(b),
        Value::Bool(b) => Const::Bool(b),
        _ => return None,
    })
}

/// Folds constant operands, integer identities and constant branches.
/// Registers replaced by an identity are renamed at every use.
pub fn fold_function_lir(f: &LFunction) -> LFunction {
    let mut f = f.clone();
    loop {
        let mut consts: HashMap<Reg, Value> = HashMap::new();
        for b in &f.blocks {
            for i in &b.instrs {
                if let (Op::Const(c), Some((r, t))) = (&i.op, &i.result) {
                    if let Some(v) = const_of(c, t) {
                        consts.insert(*r, v);
                    }
                }
            }
        }
        let mut rename: HashMap<Reg, Reg> = HashMap::new();
        let mut changed = false;
        for b in &mut f.blocks {
            let mut out = Vec::with_capacity(b.instrs.len());
            for i in std::mem::take(&mut b.instrs) {
                match fold_instr(&i, &consts) {
                    Folded::Keep => out.push(i),
                    Folded::Replace(op) => {
                        changed = true;
                        out.push(Instr { op, ..i });
                    }
                    Folded::Alias(r) => {
                        changed = true;
                        if let Some(d) = i.dst() {
                            rename.insert(d, r);
                        }
                    }
                }
            }
            b.instrs = out;
        }
        if !rename.is_empty() {
            let resolve = |mut r: Reg| {
                while let Some(&n) = rename.get(&r) {
                    r = n;
                }
                r
            };
            for b in &mut f.blocks {
                for i in &mut b.instrs {
                    for u in i.op.uses_mut() {
                        *u = resolve(*u);
                    }
                }
            }
        }
        if !changed {
            pool_constants(&mut f);
            return f;
        }
    }
}

/// Moves every constant to the top of the entry block, one register per
/// distinct (type, value), so loops do not rematerialize them.
fn pool_constants(f: &mut LFunction) {
    let mut pool: Vec<Instr> = vec![];
    let mut seen: HashMap<(Const, HType), Reg> = HashMap::new();
    let mut rename: HashMap<Reg, Reg> = HashMap::new();
    for b in &mut f.blocks {
        b.instrs.retain(|i| match (&i.op, &i.result) {
            (Op::Const(c), Some((r, t))) => {
                match seen.get(&(c.clone(), t.clone())) {
                    Some(&first) => {
                        rename.insert(*r, first);
                    }
                    None => {
                        seen.insert((c.clone(), t.clone()), *r);
                        pool.push(i.clone());
                    }
                }
                false
            }
            _ => true,
        });
    }
    if let Some(entry) = f.blocks.first_mut() {
        entry.instrs.splice(0..0, pool);
    }
    for b in &mut f.blocks {
        for i in &mut b.instrs {
            for u in i.op.uses_mut() {
                if let Some(&n) = rename.get(u) {
                    *u = n;
                }
            }
        }
    }
}

enum Folded {
    Keep,
    Replace(Op),
    Alias(Reg),
}

fn fold_instr(i: &Instr, consts: &HashMap<Reg, Value>) -> Folded {
    let ty = i.result.as_ref().map(|(_, t)| t);
    match &i.op {
        Op::Bin(op, a, b) | Op::Cmp(op, a, b) => {
            let (ca, cb) = (consts.get(a), consts.get(b));
            if let (Some(x), Some(y)) = (ca, cb) {
                if let Some(Ok(v)) = eval_prim(*op, *x, *y) {
                    if let Some(c) = value_const(v) {
                        return Folded::Replace(Op::Const(c));
                    }
                }
                return Folded::Keep;
            }
            if !ty.is_some_and(|t| t.is_int()) || op.is_compare() {
                return Folded::Keep;
            }
            let (l, r) = (ca.and_then(|v| v.as_bits()), cb.and_then(|v| v.as_bits()));
            match op {
                PrimOp::Add | PrimOp::Or | PrimOp::Xor if r == Some(0) => Folded::Alias(*a),
                PrimOp::Add | PrimOp::Or | PrimOp::Xor if l == Some(0) => Folded::Alias(*b),
                PrimOp::Sub | PrimOp::Shl | PrimOp::LShr | PrimOp::AShr if r == Some(0) => Folded::Alias(*a),
                PrimOp::Mul if r == Some(1) => Folded::Alias(*a),
                PrimOp::Mul if l == Some(1) => Folded::Alias(*b),
                PrimOp::Mul | PrimOp::And if r == Some(0) || l == Some(0) => Folded::Replace(Op::Const(Const::Int(0))),
                _ => Folded::Keep,
            }
        }
        Op::Cast(k, a) => match (consts.get(a), ty) {
            (Some(v), Some(t)) => match eval_cast(*k, *v, t).and_then(value_const) {
                Some(c) => Folded::Replace(Op::Const(c)),
                None => Folded::Keep,
            },
            _ => Folded::Keep,
        },
        Op::CondBr { cond, then, els } => match consts.get(cond).and_then(|v| v.truthy()) {
            Some(true) => Folded::Replace(Op::Br(then.clone())),
            Some(false) => Folded::Replace(Op::Br(els.clone())),
            None => Folded::Keep,
        },
        Op::Switch { val, cases, default } => match consts.get(val) {
            Some(Value::Int { bits, .. }) => {
                let target = cases
                    .iter()
                    .find(|(c, _)| matches!(c, Const::Int(b) if b == bits))
                    .map_or(default.clone(), |(_, l)| l.clone());
                Folded::Replace(Op::Br(target))
            }
            _ => Folded::Keep,
        },
        _ => Folded::Keep,
    }
}

/// Rewrites `sub-nuw` to plain `sub`: the no-wrap check only applies at
/// opt level 0.
pub fn strip_nuw(m: &LModule) -> LModule {
    let mut m = m.clone();
    for f in &mut m.functions {
        for b in &mut f.blocks {
            for i in &mut b.instrs {
                if let Op::Bin(op @ PrimOp::SubNuw, ..) = &mut i.op {
                    *op = PrimOp::Sub;
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hir::build::*;
    use crate::hir::typecheck_module;

    fn fold_expr_only(e: Expr) -> Expr {
        let f = function("f", vec![("x", HType::i64())], HType::i64(), ret(e), &[]).unwrap();
        let m = typecheck_module(&HModule::new("t").with(f).unwrap()).unwrap();
        match fold_function(&m.functions[0]).body {
            Stmt::Return(Some(e)) => e,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn literal_arithmetic() {
        let e = fold_expr_only(mul(ui64(2), mul(ui64(2), mul(ui64(2), ui64(1)))));
        assert_eq!(int_lit_value(&e), Some(8));
    }

    #[test]
    fn math_intrinsic_on_literal() {
        let f = function("f", vec![], HType::F32, ret(intrinsic("round.f32", vec![fl32(2.5)])), &[]).unwrap();
        let m = typecheck_module(&HModule::new("t").with(f).unwrap()).unwrap();
        match fold_function(&m.functions[0]).body {
            Stmt::Return(Some(e)) => assert_eq!(e.literal_value(), Some(Value::f32(3.0))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn division_by_zero_kept() {
        let e = fold_expr_only(sdiv(si64(1), si64(0)));
        assert!(matches!(e.kind, ExprKind::Prim(PrimOp::SDiv, _)));
    }

    #[test]
    fn identities() {
        assert_eq!(fold_expr_only(mul(var("x"), ui64(1))).as_var(), Some("x"));
        assert_eq!(fold_expr_only(add(ui64(0), var("x"))).as_var(), Some("x"));
        assert_eq!(int_lit_value(&fold_expr_only(mul(var("x"), ui64(0)))), Some(0));
        let kept = fold_expr_only(mul(sdiv(si64(1), var("x")), ui64(0)));
        assert!(matches!(kept.kind, ExprKind::Prim(PrimOp::Mul, _)));
    }

    #[test]
    fn constant_if() {
        let f = function(
            "f",
            vec![],
            HType::i64(),
            if_(icmp_ult(ui64(3), ui64(5)), ret(ui64(1)), ret(ui64(2))),
            &[],
        )
        .unwrap();
        let m = typecheck_module(&HModule::new("t").with(f).unwrap()).unwrap();
        assert_eq!(fold_function(&m.functions[0]).body, ret(ui64(1)));
    }
}
