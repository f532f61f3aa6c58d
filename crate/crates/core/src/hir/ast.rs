use std::collections::BTreeSet;

use crate::ops::{CastKind, PrimOp, Value};
use crate::types::{FnSig, HType};

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    /// Filled in by the type checker.
    pub ty: Option<HType>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Var(String),
    App(Rator, Vec<Expr>),
    Let(Vec<Binding>, Box<Stmt>, Box<Expr>),
    /// Integer literal; `bits` is masked to `width`, `signed` only affects printing.
    IntLit { bits: u64, width: u8, signed: bool },
    /// Float literal; for f32, `bits` holds the f32 bit pattern.
    FloatLit { bits: u64, ty: HType },
    SymLit(String),
    BoolLit(bool),
    Gep(Box<Expr>, Vec<Expr>),
    Load(Box<Expr>),
    Cast(CastKind, Box<Expr>, HType),
    Prim(PrimOp, Vec<Expr>),
    /// Address of a module global buffer.
    GlobalAddr(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Rator {
    Defined(String),
    Intrinsic(String, FnSig),
    External(String, FnSig),
    Host(String, FnSig),
}

impl Rator {
    pub fn name(&self) -> &str {
        match self {
            Rator::Defined(n) | Rator::Intrinsic(n, _) | Rator::External(n, _) | Rator::Host(n, _) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub name: String,
    pub init: Expr,
    pub ty: HType,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Expr(Expr),
    Block(Vec<Stmt>),
    Void,
    Return(Option<Expr>),
    While(Expr, Box<Stmt>),
    If(Expr, Box<Stmt>, Box<Stmt>),
    Set(String, Expr),
    Switch(Expr, Vec<(Expr, Stmt)>, Box<Stmt>),
    Label(String, Box<Stmt>),
    Jump(String),
    /// `Store(value, addr)` writes through a pointer.
    Store(Expr, Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HFunction {
    pub name: String,
    pub params: Vec<(String, HType)>,
    pub ret: HType,
    pub body: Stmt,
    pub attrs: BTreeSet<String>,
}

pub const ALWAYS_INLINE: &str = "always-inline";
pub const PURE: &str = "pure";

impl HFunction {
    pub fn sig(&self) -> FnSig {
        FnSig::new(self.params.iter().map(|(_, t)| t.clone()).collect(), self.ret.clone())
    }

    pub fn is_always_inline(&self) -> bool {
        self.attrs.contains(ALWAYS_INLINE)
    }

    pub fn is_pure(&self) -> bool {
        self.attrs.contains(PURE)
    }
}

impl Expr {
    pub fn new(kind: ExprKind) -> Expr {
        let ty = match &kind {
            ExprKind::IntLit { width, .. } => Some(HType::Int(*width)),
            ExprKind::FloatLit { ty, .. } => Some(ty.clone()),
            ExprKind::SymLit(_) => Some(HType::Sym),
            ExprKind::BoolLit(_) => Some(HType::HostBool),
            _ => None,
        };
        Expr { kind, ty }
    }

    pub fn ty(&self) -> &HType {
        self.ty.as_ref().expect("expression has not been type checked")
    }

    pub fn is_literal(&self) -> bool {
        matches!(
            self.kind,
            ExprKind::IntLit { .. } | ExprKind::FloatLit { .. } | ExprKind::SymLit(_) | ExprKind::BoolLit(_)
        )
    }

    /// Variables and literals.
    pub fn is_atomic(&self) -> bool {
        self.is_literal() || matches!(self.kind, ExprKind::Var(_) | ExprKind::GlobalAddr(_))
    }

    /// Runtime value of a numeric or boolean literal.
    pub fn literal_value(&self) -> Option<Value> {
        match &self.kind {
            ExprKind::IntLit { bits, width, .. } => Some(Value::Int { width: *width, bits: *bits }),
            ExprKind::FloatLit { bits, ty: HType::F32 } => Some(Value::F32(*bits as u32)),
            ExprKind::FloatLit { bits, .. } => Some(Value::F64(*bits)),
            ExprKind::BoolLit(b) => Some(Value::Bool(*b)),
            _ => None,
        }
    }

    /// Literal for a numeric or boolean value.
    pub fn from_value(v: Value) -> Option<Expr> {
        Some(Expr::new(match v {
            Value::Int { width, bits } => ExprKind::IntLit { bits, width, signed: false },
            Value::F32(b) => ExprKind::FloatLit { bits: b as u64, ty: HType::F32 },
            Value::F64(b) => ExprKind::FloatLit { bits: b, ty: HType::F64 },
            Value::Bool(b) => ExprKind::BoolLit(b),
            _ => return None,
        }))
    }

    pub fn as_var(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Var(n) => Some(n),
            _ => None,
        }
    }

    /// Constant truth value of a literal condition.
    pub fn const_truth(&self) -> Option<bool> {
        match &self.kind {
            ExprKind::IntLit { bits, width: 1, .. } => Some(*bits != 0),
            ExprKind::BoolLit(b) => Some(*b),
            _ => None,
        }
    }

    /// Number of expression nodes, including those inside `Let` statements.
    pub fn size(&self) -> usize {
        let mut n = 0;
        walk_expr(self, &mut |_| n += 1);
        n
    }
}

/// Read-only traversal over expressions and statements. Override a method
/// and call the matching `walk_*_children` to continue.
pub trait Visitor {
    fn expr(&mut self, e: &Expr) {
        walk_expr_children(self, e)
    }
    fn stmt(&mut self, s: &Stmt) {
        walk_stmt_children(self, s)
    }
}

pub fn walk_expr_children<V: Visitor + ?Sized>(v: &mut V, e: &Expr) {
    match &e.kind {
        ExprKind::App(_, args) | ExprKind::Prim(_, args) => args.iter().for_each(|a| v.expr(a)),
        ExprKind::Let(bs, body, result) => {
            bs.iter().for_each(|b| v.expr(&b.init));
            v.stmt(body);
            v.expr(result);
        }
        ExprKind::Gep(base, idx) => {
            v.expr(base);
            idx.iter().for_each(|a| v.expr(a));
        }
        ExprKind::Load(a) | ExprKind::Cast(_, a, _) => v.expr(a),
        ExprKind::Var(_)
        | ExprKind::IntLit { .. }
        | ExprKind::FloatLit { .. }
        | ExprKind::SymLit(_)
        | ExprKind::BoolLit(_)
        | ExprKind::GlobalAddr(_) => {}
    }
}

pub fn walk_stmt_children<V: Visitor + ?Sized>(v: &mut V, s: &Stmt) {
    match s {
        Stmt::Expr(e) | Stmt::Set(_, e) | Stmt::Return(Some(e)) => v.expr(e),
        Stmt::Block(ss) => ss.iter().for_each(|s| v.stmt(s)),
        Stmt::While(c, b) => {
            v.expr(c);
            v.stmt(b);
        }
        Stmt::If(c, t, e) => {
            v.expr(c);
            v.stmt(t);
            v.stmt(e);
        }
        Stmt::Switch(e, cases, d) => {
            v.expr(e);
            for (c, s) in cases {
                v.expr(c);
                v.stmt(s);
            }
            v.stmt(d);
        }
        Stmt::Label(_, b) => v.stmt(b),
        Stmt::Store(val, addr) => {
            v.expr(val);
            v.expr(addr);
        }
        Stmt::Void | Stmt::Return(None) | Stmt::Jump(_) => {}
    }
}

/// Rebuilding traversal. Override a method and call the matching
/// `fold_*_children` to continue.
pub trait Folder {
    fn expr(&mut self, e: Expr) -> Expr {
        fold_expr_children(self, e)
    }
    fn stmt(&mut self, s: Stmt) -> Stmt {
        fold_stmt_children(self, s)
    }
}

pub fn fold_expr_children<F: Folder + ?Sized>(f: &mut F, e: Expr) -> Expr {
    let Expr { kind, ty } = e;
    let kind = match kind {
        ExprKind::App(r, args) => ExprKind::App(r, args.into_iter().map(|a| f.expr(a)).collect()),
        ExprKind::Prim(op, args) => ExprKind::Prim(op, args.into_iter().map(|a| f.expr(a)).collect()),
        ExprKind::Let(bs, body, result) => {
            let bs = bs
                .into_iter()
                .map(|b| Binding { init: f.expr(b.init), ..b })
                .collect();
            let body = f.stmt(*body);
            let result = f.expr(*result);
            ExprKind::Let(bs, Box::new(body), Box::new(result))
        }
        ExprKind::Gep(base, idx) => {
            let base = f.expr(*base);
            ExprKind::Gep(Box::new(base), idx.into_iter().map(|a| f.expr(a)).collect())
        }
        ExprKind::Load(a) => ExprKind::Load(Box::new(f.expr(*a))),
        ExprKind::Cast(k, a, t) => ExprKind::Cast(k, Box::new(f.expr(*a)), t),
        k => k,
    };
    Expr { kind, ty }
}

pub fn fold_stmt_children<F: Folder + ?Sized>(f: &mut F, s: Stmt) -> Stmt {
    match s {
        Stmt::Expr(e) => Stmt::Expr(f.expr(e)),
        Stmt::Set(n, e) => Stmt::Set(n, f.expr(e)),
        Stmt::Return(e) => Stmt::Return(e.map(|e| f.expr(e))),
        Stmt::Block(ss) => Stmt::Block(ss.into_iter().map(|s| f.stmt(s)).collect()),
        Stmt::While(c, b) => {
            let c = f.expr(c);
            Stmt::While(c, Box::new(f.stmt(*b)))
        }
        Stmt::If(c, t, e) => {
            let c = f.expr(c);
            let t = f.stmt(*t);
            Stmt::If(c, Box::new(t), Box::new(f.stmt(*e)))
        }
        Stmt::Switch(e, cases, d) => {
            let e = f.expr(e);
            let cases = cases.into_iter().map(|(c, s)| (f.expr(c), f.stmt(s))).collect();
            Stmt::Switch(e, cases, Box::new(f.stmt(*d)))
        }
        Stmt::Label(n, b) => Stmt::Label(n, Box::new(f.stmt(*b))),
        Stmt::Store(v, a) => {
            let v = f.expr(v);
            Stmt::Store(v, f.expr(a))
        }
        s @ (Stmt::Void | Stmt::Jump(_)) => s,
    }
}

struct ExprWalk<'f>(&'f mut dyn FnMut(&Expr));

impl Visitor for ExprWalk<'_> {
    fn expr(&mut self, e: &Expr) {
        (self.0)(e);
        walk_expr_children(self, e);
    }
}

struct StmtWalk<'f>(&'f mut dyn FnMut(&Stmt));

impl Visitor for StmtWalk<'_> {
    fn stmt(&mut self, s: &Stmt) {
        (self.0)(s);
        walk_stmt_children(self, s);
    }
}

/// Calls `f` on every expression in `e` (pre-order, through `Let` bodies).
pub fn walk_expr(e: &Expr, f: &mut dyn FnMut(&Expr)) {
    ExprWalk(f).expr(e)
}

/// Calls `f` on every expression inside `s`.
pub fn walk_stmt_exprs(s: &Stmt, f: &mut dyn FnMut(&Expr)) {
    ExprWalk(f).stmt(s)
}

/// Calls `f` on every statement inside `s`, including `s` itself and
/// statements nested in `Let` expressions.
pub fn walk_stmts(s: &Stmt, f: &mut dyn FnMut(&Stmt)) {
    StmtWalk(f).stmt(s)
}

/// Calls `f` on every statement nested inside `e`.
pub fn walk_expr_stmts(e: &Expr, f: &mut dyn FnMut(&Stmt)) {
    StmtWalk(f).expr(e)
}

/// Names assigned by `Set` anywhere inside `s`.
pub fn assigned_vars(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk_stmts(s, &mut |s| {
        if let Stmt::Set(n, _) = s {
            out.insert(n.clone());
        }
    });
    out
}

/// Names assigned by `Set` anywhere inside `e`.
pub fn assigned_vars_expr(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk_expr_stmts(e, &mut |s| {
        if let Stmt::Set(n, _) = s {
            out.insert(n.clone());
        }
    });
    out
}

/// Every variable name referenced by `Var` inside `e`. Over-approximates
/// free variables (bound names inside nested `Let`s are included).
pub fn referenced_vars(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    walk_expr(e, &mut |e| {
        if let ExprKind::Var(n) = &e.kind {
            out.insert(n.clone());
        }
    });
    out
}

/// Whether the statement contains a `Label` anywhere.
pub fn contains_label(s: &Stmt) -> bool {
    let mut found = false;
    walk_stmts(s, &mut |s| found |= matches!(s, Stmt::Label(..)));
    found
}

/// Whether the statement contains a `Label` or `Jump` anywhere.
pub fn contains_label_or_jump(s: &Stmt) -> bool {
    let mut found = false;
    walk_stmts(s, &mut |s| found |= matches!(s, Stmt::Label(..) | Stmt::Jump(_)));
    found
}

/// Conservative check that control can never fall off the end of `s`.
pub fn always_exits(s: &Stmt) -> bool {
    match s {
        Stmt::Return(_) | Stmt::Jump(_) => true,
        Stmt::Block(ss) => ss.iter().any(always_exits),
        Stmt::If(_, t, e) => always_exits(t) && always_exits(e),
        Stmt::Switch(_, cases, d) => cases.iter().all(|(_, s)| always_exits(s)) && always_exits(d),
        Stmt::While(c, _) => c.const_truth() == Some(true),
        Stmt::Label(_, b) => always_exits(b),
        Stmt::Expr(e) => expr_always_exits(e),
        Stmt::Set(_, e) => expr_always_exits(e),
        Stmt::Void | Stmt::Store(..) => false,
    }
}

fn expr_always_exits(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Let(bs, body, result) => {
            bs.iter().any(|b| expr_always_exits(&b.init)) || always_exits(body) || expr_always_exits(result)
        }
        _ => false,
    }
}

/// Counts mul-like nodes; used by tests and generators.
pub fn count_prims(s: &Stmt, op: PrimOp) -> usize {
    let mut n = 0;
    walk_stmt_exprs(s, &mut |e| {
        if matches!(&e.kind, ExprKind::Prim(o, _) if *o == op) {
            n += 1;
        }
    });
    n
}
