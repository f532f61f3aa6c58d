//! Type checking. Produces a copy of the module with every expression's
//! `ty` filled in. Checking is deterministic and idempotent.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::ast::*;
use super::dump;
use super::module::HModule;
use crate::intrinsics;
use crate::types::{FnSig, HType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeErrorKind {
    #[error("type mismatch: expected {expected}, found {found}")]
    TypeMismatch { expected: String, found: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("missing return on some control path")]
    MissingReturn,
    #[error("unknown intrinsic `{0}`")]
    UnknownIntrinsic(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unknown global `{0}`")]
    UnknownGlobal(String),
    #[error("expected {expected} arguments, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("duplicate switch case {0}")]
    DuplicateCase(String),
    #[error("switch case is not a literal of the scrutinee type")]
    NonConstantCase,
    #[error("duplicate binding `{0}`")]
    DuplicateBinding(String),
    #[error("invalid type: {0}")]
    InvalidType(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("in `{function}` at {site}: {kind}")]
pub struct TypeError {
    pub function: String,
    pub site: String,
    pub kind: TypeErrorKind,
}

/// Type checks every function. On success returns the annotated module;
/// otherwise the first error found in each failing function.
pub fn typecheck_module(m: &HModule) -> Result<HModule, Vec<TypeError>> {
    let mut out = m.clone();
    let mut errors = Vec::new();
    let sigs: HashMap<String, FnSig> = m.functions.iter().map(|f| (f.name.clone(), f.sig())).collect();
    for g in &m.globals {
        if let Err(e) = g.ty.validate() {
            errors.push(TypeError {
                function: String::new(),
                site: format!("global {}", g.name),
                kind: TypeErrorKind::InvalidType(e),
            });
        }
    }
    for f in &mut out.functions {
        let mut ck = Checker {
            module: m,
            sigs: &sigs,
            function: f.name.clone(),
            ret: f.ret.clone(),
            env: f.params.clone(),
            labels: HashSet::new(),
        };
        if let Err(e) = ck.function(f) {
            errors.push(e);
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

struct Checker<'m> {
    module: &'m HModule,
    sigs: &'m HashMap<String, FnSig>,
    function: String,
    ret: HType,
    env: Vec<(String, HType)>,
    labels: HashSet<String>,
}

fn site_of_expr(e: &Expr) -> String {
    truncate(dump::expr_to_sexp(e).to_string())
}

fn truncate(mut s: String) -> String {
    if s.len() > 80 {
        let mut cut = 77;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
        s.push_str("...");
    }
    s
}

fn mismatch(expected: impl ToString, found: impl ToString) -> TypeErrorKind {
    TypeErrorKind::TypeMismatch { expected: expected.to_string(), found: found.to_string() }
}

impl Checker<'_> {
    fn err(&self, site: String, kind: TypeErrorKind) -> TypeError {
        TypeError { function: self.function.clone(), site, kind }
    }

    fn value_type(&self, t: &HType, site: &str) -> Result<(), TypeError> {
        t.validate().map_err(|e| self.err(site.to_string(), TypeErrorKind::InvalidType(e)))?;
        if !t.is_scalar() {
            return Err(self.err(site.to_string(), TypeErrorKind::InvalidType(format!("{t} is not a value type"))));
        }
        Ok(())
    }

    fn function(&mut self, f: &mut HFunction) -> Result<(), TypeError> {
        for (p, t) in &f.params {
            self.value_type(t, &format!("parameter {p}"))?;
        }
        if f.ret != HType::Void {
            self.value_type(&f.ret, "return type")?;
        }
        let mut labels = Vec::new();
        walk_stmts(&f.body, &mut |s| {
            if let Stmt::Label(l, _) = s {
                labels.push(l.clone());
            }
        });
        for l in labels {
            if !self.labels.insert(l.clone()) {
                return Err(self.err(format!("label {l}"), TypeErrorKind::DuplicateLabel(l)));
            }
        }
        self.stmt(&mut f.body)?;
        if f.ret != HType::Void && !always_exits(&f.body) {
            return Err(self.err("function body".into(), TypeErrorKind::MissingReturn));
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&HType> {
        self.env.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn expect(&mut self, e: &mut Expr, want: &HType) -> Result<(), TypeError> {
        let t = self.expr(e)?;
        if &t != want {
            return Err(self.err(site_of_expr(e), mismatch(want, t)));
        }
        Ok(())
    }

    fn condition(&mut self, e: &mut Expr) -> Result<(), TypeError> {
        let t = self.expr(e)?;
        if !t.is_condition() {
            return Err(self.err(site_of_expr(e), mismatch("i1 or bool", t)));
        }
        Ok(())
    }

    fn stmt(&mut self, s: &mut Stmt) -> Result<(), TypeError> {
        match s {
            Stmt::Expr(e) => {
                self.expr(e)?;
            }
            Stmt::Block(ss) => {
                for s in ss {
                    self.stmt(s)?;
                }
            }
            Stmt::Void => {}
            Stmt::Return(None) => {
                if self.ret != HType::Void {
                    return Err(self.err("return".into(), mismatch(&self.ret, HType::Void)));
                }
            }
            Stmt::Return(Some(e)) => {
                let want = self.ret.clone();
                if want == HType::Void {
                    let t = self.expr(e)?;
                    return Err(self.err(site_of_expr(e), mismatch(HType::Void, t)));
                }
                self.expect(e, &want)?;
            }
            Stmt::While(c, b) => {
                self.condition(c)?;
                self.stmt(b)?;
            }
            Stmt::If(c, t, e) => {
                self.condition(c)?;
                self.stmt(t)?;
                self.stmt(e)?;
            }
            Stmt::Set(name, e) => {
                let Some(want) = self.lookup(name).cloned() else {
                    return Err(self.err(format!("set {name}"), TypeErrorKind::UnboundVariable(name.clone())));
                };
                self.expect(e, &want)?;
            }
            Stmt::Switch(scrut, cases, default) => {
                let st = self.expr(scrut)?;
                if !matches!(st, HType::Int(_) | HType::Sym) {
                    return Err(self.err(site_of_expr(scrut), mismatch("integer or sym", st)));
                }
                let mut seen = HashSet::new();
                for (c, body) in cases.iter_mut() {
                    let key = match &c.kind {
                        ExprKind::IntLit { bits, .. } if c.ty.as_ref() == Some(&st) => bits.to_string(),
                        ExprKind::SymLit(text) if st == HType::Sym => text.clone(),
                        _ => return Err(self.err(site_of_expr(c), TypeErrorKind::NonConstantCase)),
                    };
                    self.expr(c)?;
                    if !seen.insert(key.clone()) {
                        return Err(self.err(site_of_expr(c), TypeErrorKind::DuplicateCase(key)));
                    }
                    self.stmt(body)?;
                }
                self.stmt(default)?;
            }
            Stmt::Label(_, b) => self.stmt(b)?,
            Stmt::Jump(l) => {
                if !self.labels.contains(l.as_str()) {
                    return Err(self.err(format!("jump {l}"), TypeErrorKind::UnresolvedLabel(l.clone())));
                }
            }
            Stmt::Store(v, a) => {
                let at = self.expr(a)?;
                let Some(elem) = at.pointee().cloned() else {
                    return Err(self.err(site_of_expr(a), mismatch("pointer", at)));
                };
                if !elem.is_scalar() {
                    return Err(self.err(site_of_expr(a), mismatch("pointer to a value type", at)));
                }
                self.expect(v, &elem)?;
            }
        }
        Ok(())
    }

    fn expr(&mut self, e: &mut Expr) -> Result<HType, TypeError> {
        let t = self.expr_inner(e).map_err(|mut err| {
            if err.site.is_empty() {
                err.site = site_of_expr(e);
            }
            err
        })?;
        e.ty = Some(t.clone());
        Ok(t)
    }

    fn expr_inner(&mut self, e: &mut Expr) -> Result<HType, TypeError> {
        match &mut e.kind {
            ExprKind::Var(n) => match self.lookup(n) {
                Some(t) => Ok(t.clone()),
                None => Err(self.err(n.clone(), TypeErrorKind::UnboundVariable(n.clone()))),
            },
            ExprKind::IntLit { width, .. } => {
                let t = HType::Int(*width);
                t.validate().map_err(|m| self.err(String::new(), TypeErrorKind::InvalidType(m)))?;
                Ok(t)
            }
            ExprKind::FloatLit { ty, .. } => {
                if !ty.is_float() {
                    return Err(self.err(String::new(), mismatch("f32 or f64", &*ty)));
                }
                Ok(ty.clone())
            }
            ExprKind::SymLit(_) => Ok(HType::Sym),
            ExprKind::BoolLit(_) => Ok(HType::HostBool),
            ExprKind::GlobalAddr(name) => match self.module.global(name) {
                Some(g) => Ok(match &g.ty {
                    HType::Array(elem, _) => HType::Ptr(elem.clone()),
                    t => HType::ptr(t.clone()),
                }),
                None => Err(self.err(String::new(), TypeErrorKind::UnknownGlobal(name.clone()))),
            },
            ExprKind::App(rator, args) => {
                let sig = match rator {
                    Rator::Defined(name) => match self.sigs.get(name.as_str()) {
                        Some(sig) => sig.clone(),
                        None => {
                            let name = name.clone();
                            return Err(self.err(String::new(), TypeErrorKind::UnknownFunction(name)));
                        }
                    },
                    Rator::Intrinsic(name, sig) => match intrinsics::signature(name) {
                        None => {
                            let name = name.clone();
                            return Err(self.err(String::new(), TypeErrorKind::UnknownIntrinsic(name)));
                        }
                        Some(table) if &table != sig => {
                            let found = sig.clone();
                            return Err(self.err(String::new(), mismatch(table, found)));
                        }
                        Some(table) => table,
                    },
                    Rator::External(_, sig) | Rator::Host(_, sig) => sig.clone(),
                };
                if sig.params.len() != args.len() {
                    let kind = TypeErrorKind::ArityMismatch { expected: sig.params.len(), found: args.len() };
                    return Err(self.err(String::new(), kind));
                }
                for (a, want) in args.iter_mut().zip(&sig.params) {
                    self.expect(a, want)?;
                }
                Ok((*sig.ret).clone())
            }
            ExprKind::Let(bindings, body, result) => {
                let mut names = HashSet::new();
                for b in bindings.iter_mut() {
                    if !names.insert(b.name.clone()) {
                        return Err(self.err(format!("let {}", b.name), TypeErrorKind::DuplicateBinding(b.name.clone())));
                    }
                    self.value_type(&b.ty, &format!("let {}", b.name))?;
                    let want = b.ty.clone();
                    self.expect(&mut b.init, &want)?;
                }
                let depth = self.env.len();
                self.env.extend(bindings.iter().map(|b| (b.name.clone(), b.ty.clone())));
                let r = self.stmt(body).and_then(|_| self.expr(result));
                self.env.truncate(depth);
                r
            }
            ExprKind::Gep(base, indices) => {
                let bt = self.expr(base)?;
                let Some(mut cur) = bt.pointee().cloned() else {
                    return Err(self.err(site_of_expr(base), mismatch("pointer", bt)));
                };
                if indices.is_empty() {
                    return Err(self.err(String::new(), TypeErrorKind::ArityMismatch { expected: 1, found: 0 }));
                }
                for (k, idx) in indices.iter_mut().enumerate() {
                    let it = self.expr(idx)?;
                    if !it.is_int() {
                        return Err(self.err(site_of_expr(idx), mismatch("integer index", it)));
                    }
                    if k == 0 {
                        continue;
                    }
                    cur = match cur {
                        HType::Array(elem, _) => *elem,
                        HType::Struct(fields) => match &idx.kind {
                            ExprKind::IntLit { bits, .. } if (*bits as usize) < fields.len() => {
                                fields[*bits as usize].1.clone()
                            }
                            _ => return Err(self.err(site_of_expr(idx), mismatch("constant field index", "expression"))),
                        },
                        other => return Err(self.err(site_of_expr(idx), mismatch("array or struct", other))),
                    };
                }
                Ok(HType::ptr(cur))
            }
            ExprKind::Load(a) => {
                let at = self.expr(a)?;
                match at.pointee() {
                    Some(t) if t.is_scalar() => Ok(t.clone()),
                    _ => Err(self.err(site_of_expr(a), mismatch("pointer to a value type", at))),
                }
            }
            ExprKind::Cast(kind, arg, to) => {
                let (kind, to) = (*kind, to.clone());
                let from = self.expr(arg)?;
                to.validate().map_err(|m| self.err(site_of_expr(arg), TypeErrorKind::InvalidType(m)))?;
                if !kind.accepts(&from, &to) {
                    return Err(self.err(site_of_expr(arg), mismatch(format!("{kind} source for {to}"), from)));
                }
                Ok(to)
            }
            ExprKind::Prim(op, args) => {
                let op = *op;
                if args.len() != 2 {
                    return Err(self.err(String::new(), TypeErrorKind::ArityMismatch { expected: 2, found: args.len() }));
                }
                let a = self.expr(&mut args[0])?;
                let b = self.expr(&mut args[1])?;
                if a != b {
                    return Err(self.err(site_of_expr(&args[1]), mismatch(&a, b)));
                }
                if !op.accepts(&a) {
                    return Err(self.err(site_of_expr(&args[0]), mismatch(format!("{op} operand"), a)));
                }
                Ok(op.result_type(&a))
            }
        }
    }
}
