//! Builders for HIR trees. All builders are pure: building the same tree
//! twice yields equal values.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use super::ast::*;
use crate::intrinsics;
use crate::ops::{mask, CastKind, PrimOp};
use crate::types::{FnSig, HType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot build `{tag}`: {msg}")]
pub struct ShapeError {
    pub tag: String,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HirError {
    #[error("duplicate parameter `{param}` in function `{function}`")]
    DuplicateParam { function: String, param: String },
    #[error("function `{0}` already exists in the module")]
    DuplicateFunction(String),
    #[error("global `{0}` already exists in the module")]
    DuplicateGlobal(String),
}

pub fn var(name: impl Into<String>) -> Expr {
    Expr::new(ExprKind::Var(name.into()))
}

pub fn int_lit(value: i128, width: u8, signed: bool) -> Expr {
    Expr::new(ExprKind::IntLit { bits: mask(width, value as u64), width, signed })
}

pub fn ui64(v: u64) -> Expr {
    int_lit(v as i128, 64, false)
}

pub fn si64(v: i64) -> Expr {
    int_lit(v as i128, 64, true)
}

pub fn ui32(v: u32) -> Expr {
    int_lit(v as i128, 32, false)
}

pub fn si32(v: i32) -> Expr {
    int_lit(v as i128, 32, true)
}

pub fn i1(b: bool) -> Expr {
    int_lit(b as i128, 1, false)
}

pub fn fl32(v: f32) -> Expr {
    Expr::new(ExprKind::FloatLit { bits: v.to_bits() as u64, ty: HType::F32 })
}

pub fn fl64(v: f64) -> Expr {
    Expr::new(ExprKind::FloatLit { bits: v.to_bits(), ty: HType::F64 })
}

pub fn sym(s: impl Into<String>) -> Expr {
    Expr::new(ExprKind::SymLit(s.into()))
}

pub fn boolean(b: bool) -> Expr {
    Expr::new(ExprKind::BoolLit(b))
}

pub fn prim(op: PrimOp, a: Expr, b: Expr) -> Expr {
    Expr::new(ExprKind::Prim(op, vec![a, b]))
}

macro_rules! binops {
    ($($f:ident => $op:ident),* $(,)?) => {
        $(pub fn $f(a: Expr, b: Expr) -> Expr { prim(PrimOp::$op, a, b) })*
    };
}

binops! {
    add => Add, sub => Sub, sub_nuw => SubNuw, mul => Mul, udiv => UDiv, sdiv => SDiv,
    urem => URem, srem => SRem, and => And, or => Or, xor => Xor, shl => Shl, lshr => LShr,
    ashr => AShr, fadd => FAdd, fsub => FSub, fmul => FMul, fdiv => FDiv, frem => FRem,
    icmp_eq => IcmpEq, icmp_ne => IcmpNe, icmp_ult => IcmpUlt, icmp_ule => IcmpUle,
    icmp_ugt => IcmpUgt, icmp_uge => IcmpUge, icmp_slt => IcmpSlt, icmp_sle => IcmpSle,
    icmp_sgt => IcmpSgt, icmp_sge => IcmpSge, fcmp_olt => FcmpOlt, fcmp_ole => FcmpOle,
    fcmp_ogt => FcmpOgt, fcmp_oge => FcmpOge, fcmp_oeq => FcmpOeq, fcmp_one => FcmpOne,
}

/// `e + 1`, with the literal taking `e`'s type when known and i64 otherwise.
pub fn add1(e: Expr) -> Expr {
    let width = match &e.ty {
        Some(HType::Int(w)) => *w,
        _ => 64,
    };
    add(e, int_lit(1, width, false))
}

/// Call to a function defined in the same module.
pub fn app(name: impl Into<String>, args: Vec<Expr>) -> Expr {
    Expr::new(ExprKind::App(Rator::Defined(name.into()), args))
}

/// Call to a built-in intrinsic. Unknown names get an empty signature and
/// are rejected by the type checker.
pub fn intrinsic(name: impl Into<String>, args: Vec<Expr>) -> Expr {
    let name = name.into();
    let sig = intrinsics::signature(&name).unwrap_or_else(|| FnSig::new(vec![], HType::Void));
    Expr::new(ExprKind::App(Rator::Intrinsic(name, sig), args))
}

pub fn external(name: impl Into<String>, sig: FnSig, args: Vec<Expr>) -> Expr {
    Expr::new(ExprKind::App(Rator::External(name.into(), sig), args))
}

pub fn host(name: impl Into<String>, sig: FnSig, args: Vec<Expr>) -> Expr {
    Expr::new(ExprKind::App(Rator::Host(name.into(), sig), args))
}

pub fn binding(name: impl Into<String>, init: Expr, ty: HType) -> Binding {
    Binding { name: name.into(), init, ty }
}

pub fn let_(bindings: Vec<Binding>, body: Stmt, result: Expr) -> Expr {
    Expr::new(ExprKind::Let(bindings, Box::new(body), Box::new(result)))
}

pub fn gep(base: Expr, indices: Vec<Expr>) -> Expr {
    Expr::new(ExprKind::Gep(Box::new(base), indices))
}

pub fn load(addr: Expr) -> Expr {
    Expr::new(ExprKind::Load(Box::new(addr)))
}

/// `load(gep(arr, [idx]))`.
pub fn array_ref(arr: Expr, idx: Expr) -> Expr {
    load(gep(arr, vec![idx]))
}

pub fn cast(kind: CastKind, arg: Expr, to: HType) -> Expr {
    Expr::new(ExprKind::Cast(kind, Box::new(arg), to))
}

pub fn global_addr(name: impl Into<String>) -> Expr {
    Expr::new(ExprKind::GlobalAddr(name.into()))
}

/// Unrolled `x^n` as nested multiplications ending in the literal 1.
pub fn build_pow(x: Expr, n: u32) -> Expr {
    (0..n).fold(ui64(1), |acc, _| mul(x.clone(), acc))
}

pub fn expr_stmt(e: Expr) -> Stmt {
    Stmt::Expr(e)
}

pub fn block(stmts: Vec<Stmt>) -> Stmt {
    Stmt::Block(stmts)
}

pub fn svoid() -> Stmt {
    Stmt::Void
}

pub fn ret(e: Expr) -> Stmt {
    Stmt::Return(Some(e))
}

pub fn ret_void() -> Stmt {
    Stmt::Return(None)
}

pub fn while_(cond: Expr, body: Stmt) -> Stmt {
    Stmt::While(cond, Box::new(body))
}

pub fn if_(cond: Expr, then: Stmt, els: Stmt) -> Stmt {
    Stmt::If(cond, Box::new(then), Box::new(els))
}

pub fn set(name: impl Into<String>, e: Expr) -> Stmt {
    Stmt::Set(name.into(), e)
}

pub fn switch(scrutinee: Expr, cases: Vec<(Expr, Stmt)>, default: Stmt) -> Stmt {
    Stmt::Switch(scrutinee, cases, Box::new(default))
}

pub fn label(name: impl Into<String>, body: Stmt) -> Stmt {
    Stmt::Label(name.into(), Box::new(body))
}

pub fn jump(name: impl Into<String>) -> Stmt {
    Stmt::Jump(name.into())
}

pub fn store(value: Expr, addr: Expr) -> Stmt {
    Stmt::Store(value, addr)
}

pub fn function(
    name: impl Into<String>,
    params: Vec<(&str, HType)>,
    ret: HType,
    body: Stmt,
    attrs: &[&str],
) -> Result<HFunction, HirError> {
    let name = name.into();
    let mut seen = HashSet::new();
    for (p, _) in &params {
        if !seen.insert(*p) {
            return Err(HirError::DuplicateParam { function: name, param: p.to_string() });
        }
    }
    Ok(HFunction {
        name,
        params: params.into_iter().map(|(n, t)| (n.to_string(), t)).collect(),
        ret,
        body,
        attrs: attrs.iter().map(|a| a.to_string()).collect::<BTreeSet<_>>(),
    })
}

/// Operand of the tag-driven builders.
#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Expr(Expr),
    Stmt(Stmt),
    Name(String),
    Type(HType),
    Cases(Vec<(Expr, Stmt)>),
    Bindings(Vec<Binding>),
}

fn shape(tag: &str, msg: impl Into<String>) -> ShapeError {
    ShapeError { tag: tag.to_string(), msg: msg.into() }
}

fn exprs(tag: &str, parts: Vec<Part>, n: usize) -> Result<Vec<Expr>, ShapeError> {
    if parts.len() != n {
        return Err(shape(tag, format!("expected {n} children, found {}", parts.len())));
    }
    parts
        .into_iter()
        .map(|p| match p {
            Part::Expr(e) => Ok(e),
            other => Err(shape(tag, format!("expected an expression, found {other:?}"))),
        })
        .collect()
}

/// Builds an expression from a constructor tag: any primitive operator name,
/// `add1`, `load`, `array-ref`, `gep`, `app`, `var`, `let`, or a cast name.
pub fn build_expr(tag: &str, parts: Vec<Part>) -> Result<Expr, ShapeError> {
    if let Some(op) = PrimOp::from_name(tag) {
        let mut v = exprs(tag, parts, 2)?;
        let b = v.pop().unwrap();
        return Ok(prim(op, v.pop().unwrap(), b));
    }
    if let Some(kind) = CastKind::from_name(tag) {
        let mut it = parts.into_iter();
        return match (it.next(), it.next(), it.next()) {
            (Some(Part::Expr(e)), Some(Part::Type(t)), None) => Ok(cast(kind, e, t)),
            _ => Err(shape(tag, "expected an expression and a target type")),
        };
    }
    match tag {
        "add1" => Ok(add1(exprs(tag, parts, 1)?.remove(0))),
        "load" => Ok(load(exprs(tag, parts, 1)?.remove(0))),
        "array-ref" => {
            let mut v = exprs(tag, parts, 2)?;
            let i = v.pop().unwrap();
            Ok(array_ref(v.pop().unwrap(), i))
        }
        "gep" => {
            if parts.len() < 2 {
                return Err(shape(tag, "expected a base and at least one index"));
            }
            let n = parts.len();
            let mut v = exprs(tag, parts, n)?;
            let base = v.remove(0);
            Ok(gep(base, v))
        }
        "var" | "app" => {
            let mut it = parts.into_iter();
            let name = match it.next() {
                Some(Part::Name(n)) => n,
                _ => return Err(shape(tag, "expected a name first")),
            };
            if tag == "var" {
                return match it.next() {
                    None => Ok(var(name)),
                    Some(_) => Err(shape(tag, "expected exactly one name")),
                };
            }
            let rest: Vec<Part> = it.collect();
            let n = rest.len();
            Ok(app(name, exprs(tag, rest, n)?))
        }
        "let" => {
            let mut it = parts.into_iter();
            match (it.next(), it.next(), it.next(), it.next()) {
                (Some(Part::Bindings(bs)), Some(Part::Stmt(s)), Some(Part::Expr(r)), None) => Ok(let_(bs, s, r)),
                _ => Err(shape(tag, "expected bindings, a statement and a result expression")),
            }
        }
        _ => Err(shape(tag, "unknown expression constructor")),
    }
}

/// Builds a statement from a constructor tag.
pub fn build_stmt(tag: &str, parts: Vec<Part>) -> Result<Stmt, ShapeError> {
    let n = parts.len();
    let mut it = parts.into_iter();
    let arity = |want: usize| -> Result<(), ShapeError> {
        if n == want {
            Ok(())
        } else {
            Err(shape(tag, format!("expected {want} children, found {n}")))
        }
    };
    let bad = || shape(tag, "children have the wrong kind");
    match tag {
        "expr" => {
            arity(1)?;
            match it.next() {
                Some(Part::Expr(e)) => Ok(expr_stmt(e)),
                _ => Err(bad()),
            }
        }
        "block" => it
            .map(|p| match p {
                Part::Stmt(s) => Ok(s),
                _ => Err(bad()),
            })
            .collect::<Result<_, _>>()
            .map(block),
        "void" => arity(0).map(|_| svoid()),
        "return" => match (it.next(), it.next()) {
            (None, _) => Ok(ret_void()),
            (Some(Part::Expr(e)), None) => Ok(ret(e)),
            _ => Err(shape(tag, "expected at most one expression")),
        },
        "while" => {
            arity(2)?;
            match (it.next(), it.next()) {
                (Some(Part::Expr(c)), Some(Part::Stmt(b))) => Ok(while_(c, b)),
                _ => Err(bad()),
            }
        }
        "if" => {
            arity(3)?;
            match (it.next(), it.next(), it.next()) {
                (Some(Part::Expr(c)), Some(Part::Stmt(t)), Some(Part::Stmt(e))) => Ok(if_(c, t, e)),
                _ => Err(bad()),
            }
        }
        "set" => {
            arity(2)?;
            match (it.next(), it.next()) {
                (Some(Part::Name(x)), Some(Part::Expr(e))) => Ok(set(x, e)),
                _ => Err(bad()),
            }
        }
        "switch" => {
            arity(3)?;
            match (it.next(), it.next(), it.next()) {
                (Some(Part::Expr(e)), Some(Part::Cases(cs)), Some(Part::Stmt(d))) => Ok(switch(e, cs, d)),
                _ => Err(bad()),
            }
        }
        "label" => {
            arity(2)?;
            match (it.next(), it.next()) {
                (Some(Part::Name(l)), Some(Part::Stmt(b))) => Ok(label(l, b)),
                _ => Err(bad()),
            }
        }
        "jump" => {
            arity(1)?;
            match it.next() {
                Some(Part::Name(l)) => Ok(jump(l)),
                _ => Err(bad()),
            }
        }
        "store" => {
            arity(2)?;
            match (it.next(), it.next()) {
                (Some(Part::Expr(v)), Some(Part::Expr(a))) => Ok(store(v, a)),
                _ => Err(bad()),
            }
        }
        _ => Err(shape(tag, "unknown statement constructor")),
    }
}

/// The classic recursive `pow(x, n)`, decrementing `n` with `sub-nuw`.
pub fn pow_function() -> HFunction {
    function(
        "pow",
        vec![("x", HType::i64()), ("n", HType::i64())],
        HType::i64(),
        if_(
            icmp_ule(var("n"), ui64(0)),
            ret(ui64(1)),
            ret(mul(var("x"), app("pow", vec![var("x"), sub_nuw(var("n"), ui64(1))]))),
        ),
        &[],
    )
    .expect("pow has distinct parameters")
}
