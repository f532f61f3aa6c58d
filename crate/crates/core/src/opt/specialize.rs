use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::hir::{
    assigned_vars, contains_label_or_jump, fold_expr_children, fold_stmt_children, typecheck_module, Binding as LetBinding,
    Expr, ExprKind, Folder, Global, HFunction, HModule, Rator, Stmt, ALWAYS_INLINE,
};
use crate::types::HType;

use super::dce::dce_function;
use super::fold::{fold_expr, fold_function};
use super::inline::inline_always;
use super::licm::licm_function;
use super::util::{free_vars_expr, pure_functions, substitute, substitute_expr};

/// Loops whose trip count is a known constant no larger than this are
/// fully unrolled during specialization.
pub const UNROLL_LIMIT: usize = 16;

/// Upper bound on the helper functions one specialization may create for
/// recursive self-calls with static arguments.
const MAX_HELPERS: usize = 32;

/// What is known statically about one parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    /// A literal value of the parameter's type.
    StaticValue(Expr),
    /// Bound on a pointer parameter: the `i64` parameter right after it is
    /// the array length and becomes this constant.
    StaticArraySize(u64),
    /// The parameter always points at the module global `name`, an array
    /// of `len` elements of type `elem`. The global is created if missing.
    StaticAddress { name: String, elem: HType, len: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Specialization {
    pub function: String,
    pub bindings: Vec<(String, Binding)>,
}

impl Specialization {
    pub fn new(function: impl Into<String>) -> Specialization {
        Specialization { function: function.into(), bindings: vec![] }
    }

    pub fn bind(mut self, param: impl Into<String>, b: Binding) -> Specialization {
        self.bindings.push((param.into(), b));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecializeError {
    #[error("cannot specialize unknown function {0}")]
    UnknownFunction(String),
    #[error("function {function} has no parameter {param}")]
    UnknownParam { function: String, param: String },
    #[error("binding for {param} does not fit its type {expected}: {found}")]
    BindingTypeMismatch { param: String, expected: HType, found: String },
}

/// Adds a copy of the function with the bound parameters removed and their
/// static values substituted, then folds, unrolls, inlines static recursion,
/// hoists and cleans up the copy. Returns the new module and the name of
/// the specialized function.
pub fn specialize(m: &HModule, s: &Specialization) -> Result<(HModule, String), SpecializeError> {
    let f = m.function(&s.function).ok_or_else(|| SpecializeError::UnknownFunction(s.function.clone()))?;
    let mut out = m.clone();
    let mut bound: Vec<Option<Expr>> = vec![None; f.params.len()];
    for (param, b) in &s.bindings {
        let idx = f.params.iter().position(|(n, _)| n == param).ok_or_else(|| SpecializeError::UnknownParam {
            function: f.name.clone(),
            param: param.clone(),
        })?;
        let pty = &f.params[idx].1;
        let mismatch = |found: String| SpecializeError::BindingTypeMismatch {
            param: param.clone(),
            expected: pty.clone(),
            found,
        };
        match b {
            Binding::StaticValue(e) => {
                if !e.is_literal() {
                    return Err(mismatch("value is not a literal".into()));
                }
                if e.ty.as_ref() != Some(pty) {
                    return Err(mismatch(e.ty.as_ref().map_or("untyped literal".into(), |t| t.to_string())));
                }
                bound[idx] = Some(e.clone());
            }
            Binding::StaticArraySize(k) => {
                let len_ok = matches!(pty, HType::Ptr(_)) && f.params.get(idx + 1).map(|p| &p.1) == Some(&HType::Int(64));
                if !len_ok {
                    return Err(mismatch("array size needs a pointer parameter followed by an i64 length".into()));
                }
                bound[idx + 1] = Some(Expr::new(ExprKind::IntLit { bits: *k, width: 64, signed: false }));
            }
            Binding::StaticAddress { name, elem, len } => {
                if *pty != HType::ptr(elem.clone()) {
                    return Err(mismatch(format!("address of {}", HType::ptr(elem.clone()))));
                }
                let ty = HType::array(elem.clone(), *len);
                match out.global(name) {
                    Some(g) if g.ty != ty => return Err(mismatch(format!("global {name} has type {}", g.ty))),
                    Some(_) => {}
                    None => out.globals.push(Global { name: name.clone(), ty, init: vec![] }),
                }
                bound[idx] = Some(Expr { kind: ExprKind::GlobalAddr(name.clone()), ty: Some(pty.clone()) });
            }
        }
    }

    let taken: HashSet<&str> = m.functions.iter().map(|f| f.name.as_str()).collect();
    let spec_name = (0..)
        .map(|i| format!("{}@spec{i}", f.name))
        .find(|n| !taken.contains(n.as_str()))
        .expect("unbounded range");

    let mut sp = Specializer { original: f, keys: vec![(key_of(&bound), spec_name.clone())], work: vec![0] };
    let mut made = vec![];
    while let Some(k) = sp.work.pop() {
        let (key, name) = sp.keys[k].clone();
        made.push(sp.instantiate(&name, &key, &bound));
    }
    let helpers: Vec<String> = sp.keys[1..].iter().map(|(_, n)| n.clone()).collect();

    // Helpers become always-inline unless static recursion loops back.
    let mut scratch = HModule::new("spec");
    for mut g in made.clone() {
        if helpers.contains(&g.name) {
            g.attrs.insert(ALWAYS_INLINE.into());
        }
        scratch.add_or_replace(g);
    }
    let inlined = match inline_always(&scratch) {
        Ok(x) => x,
        Err(_) => {
            for g in &mut scratch.functions {
                g.attrs.remove(ALWAYS_INLINE);
            }
            scratch
        }
    };
    let mut spec = inlined.function(&spec_name).expect("specialized function exists").clone();
    spec = fold_function(&spec);
    spec.body = unroll_loops(spec.body);
    spec = fold_function(&spec);

    // Keep helpers that are still called.
    let mut keep: BTreeSet<String> = BTreeSet::new();
    let mut stack = vec![spec.clone()];
    while let Some(g) = stack.pop() {
        crate::hir::walk_stmt_exprs(&g.body, &mut |e| {
            if let ExprKind::App(Rator::Defined(n), _) = &e.kind {
                if helpers.contains(n) && keep.insert(n.clone()) {
                    stack.push(inlined.function(n).expect("helper exists").clone());
                }
            }
        });
    }
    for n in &keep {
        out.add_or_replace(inlined.function(n).expect("helper exists").clone());
    }
    out.add_or_replace(spec.clone());

    // Hoisting needs types; if the copy does not check, leave it to the
    // pipeline to report.
    if let Ok(typed) = typecheck_module(&out) {
        let pure = pure_functions(&typed);
        let g = typed.function(&spec_name).expect("specialized function exists");
        let g = fold_function(&licm_function(g, &pure));
        let g = dce_function(&g, &pure);
        out.add_or_replace(g);
    }
    Ok((out, spec_name))
}

fn key_of(bound: &[Option<Expr>]) -> Vec<Expr> {
    bound.iter().flatten().cloned().collect()
}

fn is_static(e: &Expr) -> bool {
    e.is_literal() || matches!(e.kind, ExprKind::GlobalAddr(_))
}

struct Specializer<'a> {
    original: &'a HFunction,
    keys: Vec<(Vec<Expr>, String)>,
    work: Vec<usize>,
}

impl Specializer<'_> {
    fn instantiate(&mut self, name: &str, key: &[Expr], bound: &[Option<Expr>]) -> HFunction {
        let f = self.original;
        let mut body = f.body.clone();
        let assigned = assigned_vars(&body);
        let mut lets = vec![];
        let mut params = vec![];
        let mut values = key.iter();
        for ((p, t), b) in f.params.iter().zip(bound) {
            if b.is_none() {
                params.push((p.clone(), t.clone()));
                continue;
            }
            let v = values.next().expect("key has one value per bound parameter").clone();
            if assigned.contains(p) {
                lets.push(LetBinding { name: p.clone(), init: v, ty: t.clone() });
            } else {
                body = substitute(body, p, &v);
            }
        }
        if !lets.is_empty() {
            body = Stmt::Expr(Expr::new(ExprKind::Let(
                lets,
                Box::new(body),
                Box::new(Expr::new(ExprKind::IntLit { bits: 0, width: 1, signed: false })),
            )));
        }
        let g = fold_function(&HFunction { name: name.to_string(), params, body, ..f.clone() });
        let body = SelfCalls { sp: self, bound }.stmt(g.body.clone());
        HFunction { body, ..g }
    }

    fn helper_for(&mut self, key: Vec<Expr>) -> Option<String> {
        if let Some((_, n)) = self.keys.iter().find(|(k, _)| *k == key) {
            return Some(n.clone());
        }
        if self.keys.len() > MAX_HELPERS {
            return None;
        }
        let name = format!("{}.{}", self.keys[0].1, self.keys.len());
        self.keys.push((key, name.clone()));
        self.work.push(self.keys.len() - 1);
        Some(name)
    }
}

/// Redirects self-calls whose bound arguments are static to the matching
/// specialized copy.
struct SelfCalls<'a, 'b> {
    sp: &'a mut Specializer<'b>,
    bound: &'a [Option<Expr>],
}

impl Folder for SelfCalls<'_, '_> {
    fn expr(&mut self, e: Expr) -> Expr {
        let e = fold_expr_children(self, e);
        let ExprKind::App(Rator::Defined(g), args) = &e.kind else { return e };
        if *g != self.sp.original.name || args.len() != self.bound.len() {
            return e;
        }
        let mut key = vec![];
        let mut rest = vec![];
        for (a, b) in args.iter().zip(self.bound) {
            match b {
                Some(_) if is_static(a) => key.push(a.clone()),
                Some(_) => return e,
                None => rest.push(a.clone()),
            }
        }
        match self.sp.helper_for(key) {
            Some(name) => Expr { kind: ExprKind::App(Rator::Defined(name), rest), ty: e.ty },
            None => e,
        }
    }
}

/// Fully unrolls `While` loops with a constant trip count of at most
/// [`UNROLL_LIMIT`]. A loop qualifies when its condition mentions only a
/// counter that is `Let`-bound to a literal, and the counter is updated
/// only by the last statement of the body.
pub fn unroll_loops(s: Stmt) -> Stmt {
    Unroll.stmt(s)
}

struct Unroll;

impl Folder for Unroll {
    fn expr(&mut self, e: Expr) -> Expr {
        let e = fold_expr_children(self, e);
        let ExprKind::Let(bs, body, result) = e.kind else { return e };
        let body = match *body {
            Stmt::While(c, b) => unroll_in(&bs, vec![Stmt::While(c, b)]).pop().expect("one statement"),
            Stmt::Block(ss) => Stmt::Block(unroll_in(&bs, ss)),
            other => other,
        };
        Expr { kind: ExprKind::Let(bs, Box::new(body), result), ty: e.ty }
    }

    fn stmt(&mut self, s: Stmt) -> Stmt {
        fold_stmt_children(self, s)
    }
}

fn unroll_in(bs: &[LetBinding], mut ss: Vec<Stmt>) -> Vec<Stmt> {
    let mut clobbered: BTreeSet<String> = BTreeSet::new();
    for s in &mut ss {
        if let Stmt::While(c, b) = s {
            if let Some(u) = try_unroll(bs, &clobbered, c, b) {
                clobbered.extend(assigned_vars(&u));
                *s = u;
                continue;
            }
        }
        clobbered.extend(assigned_vars(s));
    }
    ss
}

fn try_unroll(bs: &[LetBinding], clobbered: &BTreeSet<String>, cond: &Expr, body: &Stmt) -> Option<Stmt> {
    let fv = free_vars_expr(cond);
    let [i] = fv.iter().collect::<Vec<_>>()[..] else { return None };
    let init = bs.iter().find(|b| &b.name == i).map(|b| &b.init).filter(|e| e.is_literal())?;
    if clobbered.contains(i) || contains_label_or_jump(body) {
        return None;
    }
    let Stmt::Block(stmts) = body else { return None };
    let (Stmt::Set(x, step), prefix) = stmts.split_last()? else { return None };
    if x != i || !free_vars_expr(step).iter().all(|v| v == i) {
        return None;
    }
    let prefix = Stmt::Block(prefix.to_vec());
    if assigned_vars(&prefix).contains(i) {
        return None;
    }
    let mut v = init.clone();
    let mut copies = vec![];
    loop {
        let c = fold_expr(substitute_expr(cond.clone(), i, &v));
        match c.const_truth()? {
            false => break,
            true if copies.len() == UNROLL_LIMIT => return None,
            true => {}
        }
        copies.push(substitute(prefix.clone(), i, &v));
        v = fold_expr(substitute_expr(step.clone(), i, &v));
        if !v.is_literal() {
            return None;
        }
    }
    copies.push(Stmt::Set(i.clone(), v));
    Some(Stmt::Block(copies))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hir::build::*;
    use crate::hir::{count_prims, walk_stmts};
    use crate::ops::PrimOp;

    fn pow_module() -> HModule {
        typecheck_module(&HModule::new("t").with(pow_function()).unwrap()).unwrap()
    }

    #[test]
    fn pow_ten_is_straight_line() {
        let s = Specialization::new("pow").bind("n", Binding::StaticValue(si64(10)));
        let (m, name) = specialize(&pow_module(), &s).unwrap();
        assert_eq!(name, "pow@spec0");
        let m = typecheck_module(&m).unwrap();
        let f = m.function(&name).unwrap();
        assert_eq!(f.params.len(), 1);
        assert_eq!(m.functions.len(), 2);
        let mut branches = 0;
        walk_stmts(&f.body, &mut |s| branches += matches!(s, Stmt::If(..) | Stmt::While(..)) as usize);
        assert_eq!(branches, 0);
        assert_eq!(count_prims(&f.body, PrimOp::Mul), 10);
    }

    #[test]
    fn wrong_type_rejected() {
        let s = Specialization::new("pow").bind("n", Binding::StaticValue(si32(10)));
        assert!(matches!(specialize(&pow_module(), &s), Err(SpecializeError::BindingTypeMismatch { .. })));
        let s = Specialization::new("pow").bind("k", Binding::StaticValue(si64(1)));
        assert!(matches!(specialize(&pow_module(), &s), Err(SpecializeError::UnknownParam { .. })));
    }

    #[test]
    fn static_address_replaces_pointer_param() {
        let f = function(
            "first",
            vec![("a", HType::ptr(HType::i64())), ("n", HType::i64())],
            HType::i64(),
            ret(load(gep(var("a"), vec![si64(0)]))),
            &[],
        )
        .unwrap();
        let m = typecheck_module(&HModule::new("t").with(f).unwrap()).unwrap();
        let s = Specialization::new("first").bind(
            "a",
            Binding::StaticAddress { name: "buf".into(), elem: HType::i64(), len: 4 },
        );
        let (m, name) = specialize(&m, &s).unwrap();
        let m = typecheck_module(&m).unwrap();
        assert_eq!(m.function(&name).unwrap().params.len(), 1);
        let mut addr = false;
        crate::hir::walk_stmt_exprs(&m.function(&name).unwrap().body, &mut |e| {
            addr |= matches!(&e.kind, ExprKind::GlobalAddr(n) if n == "buf")
        });
        assert!(addr);
    }

    #[test]
    fn counted_loop_unrolled() {
        let body = ret(let_(
            vec![binding("i", si64(0), HType::i64()), binding("s", si64(0), HType::i64())],
            while_(
                icmp_slt(var("i"), var("n")),
                block(vec![set("s", add(var("s"), var("i"))), set("i", add(var("i"), si64(1)))]),
            ),
            var("s"),
        ));
        let f = function("tri", vec![("n", HType::i64())], HType::i64(), body, &[]).unwrap();
        let m = typecheck_module(&HModule::new("t").with(f).unwrap()).unwrap();
        let (m, name) = specialize(&m, &Specialization::new("tri").bind("n", Binding::StaticValue(si64(4)))).unwrap();
        let mut loops = 0;
        walk_stmts(&m.function(&name).unwrap().body, &mut |s| loops += matches!(s, Stmt::While(..)) as usize);
        assert_eq!(loops, 0);
        let (m2, name2) =
            specialize(&m, &Specialization::new("tri").bind("n", Binding::StaticValue(si64(17)))).unwrap();
        assert_eq!(name2, "tri@spec1");
        let mut loops = 0;
        walk_stmts(&m2.function(&name2).unwrap().body, &mut |s| loops += matches!(s, Stmt::While(..)) as usize);
        assert_eq!(loops, 1);
    }
}
