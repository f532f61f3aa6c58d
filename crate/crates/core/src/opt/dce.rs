use std::collections::{HashMap, HashSet};

use crate::hir::{
    always_exits, contains_label, fold_expr_children, fold_stmt_children, walk_stmt_exprs, Expr, ExprKind, Folder,
    HFunction, HModule, Rator, Stmt, PURE,
};
use crate::intrinsics;
use crate::lir::{CalleeKind, Const, LFunction, LModule, Op, Reg};
use crate::ops::PrimOp;

use super::util::{free_vars_expr, free_vars_stmt, is_speculatable, pure_functions};

/// Removes dead statements, unused `Let` bindings with droppable
/// initializers, and always-inline functions no longer reachable from any
/// other function.
pub fn dce_module(m: &HModule) -> HModule {
    let pure = pure_functions(m);
    let mut out = m.clone();
    for f in &mut out.functions {
        *f = dce_function(f, &pure);
    }
    let roots: Vec<&str> =
        out.functions.iter().filter(|f| !f.is_always_inline()).map(|f| f.name.as_str()).collect();
    if roots.is_empty() {
        return out;
    }
    let mut live: HashSet<String> = roots.iter().map(|s| s.to_string()).collect();
    let mut work: Vec<String> = live.iter().cloned().collect();
    while let Some(n) = work.pop() {
        let Some(f) = out.function(&n) else { continue };
        walk_stmt_exprs(&f.body, &mut |e| {
            if let ExprKind::App(Rator::Defined(g), _) = &e.kind {
                if live.insert(g.clone()) {
                    work.push(g.clone());
                }
            }
        });
    }
    out.functions.retain(|f| live.contains(&f.name));
    out
}

pub(crate) fn dce_function(f: &HFunction, pure: &HashSet<String>) -> HFunction {
    HFunction { body: Dce { pure }.stmt(f.body.clone()), ..f.clone() }
}

struct Dce<'a> {
    pure: &'a HashSet<String>,
}

impl Dce<'_> {
    fn droppable(&self, e: &Expr) -> bool {
        is_speculatable(e, self.pure)
    }
}

impl Folder for Dce<'_> {
    fn expr(&mut self, e: Expr) -> Expr {
        let e = fold_expr_children(self, e);
        match e.kind {
            ExprKind::Let(bs, body, result) => {
                let mut used = free_vars_stmt(&body);
                used.extend(free_vars_expr(&result));
                let bs = bs.into_iter().filter(|b| used.contains(&b.name) || !self.droppable(&b.init)).collect();
                Expr { kind: ExprKind::Let(bs, body, result), ty: e.ty }
            }
            kind => Expr { kind, ty: e.ty },
        }
    }

    fn stmt(&mut self, s: Stmt) -> Stmt {
        let s = fold_stmt_children(self, s);
        match s {
            Stmt::Expr(e) if self.droppable(&e) => Stmt::Void,
            Stmt::Expr(Expr { kind: ExprKind::Let(bs, body, result), .. })
                if bs.is_empty() && self.droppable(&result) =>
            {
                *body
            }
            Stmt::If(c, t, e) if *t == Stmt::Void && *e == Stmt::Void && self.droppable(&c) => Stmt::Void,
            Stmt::Block(ss) => {
                let mut out = Vec::with_capacity(ss.len());
                let mut iter = ss.into_iter();
                while let Some(s) = iter.next() {
                    if s == Stmt::Void {
                        continue;
                    }
                    let exits = always_exits(&s);
                    out.push(s);
                    if exits {
                        let rest: Vec<Stmt> = iter.collect();
                        if rest.iter().any(contains_label) {
                            out.extend(rest.into_iter().filter(|s| *s != Stmt::Void));
                        }
                        break;
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

pub fn dce_module_lir(m: &LModule) -> LModule {
    let pure: HashSet<String> =
        m.functions.iter().filter(|f| f.attrs.contains(PURE)).map(|f| f.name.clone()).collect();
    LModule { functions: m.functions.iter().map(|f| dce_function_lir(f, &pure)).collect(), ..m.clone() }
}

/// Removes unreachable blocks, merges single-predecessor fallthrough
/// blocks and deletes unused side-effect-free instructions.
pub fn dce_function_lir(f: &LFunction, pure_fns: &HashSet<String>) -> LFunction {
    let mut f = f.clone();
    let reach = f.reachable();
    let mut k = 0;
    f.blocks.retain(|_| {
        k += 1;
        reach[k - 1]
    });
    merge_blocks(&mut f);
    remove_dead_instrs(&mut f, pure_fns);
    f
}

fn merge_blocks(f: &mut LFunction) {
    loop {
        let mut preds: HashMap<String, usize> = HashMap::new();
        for b in &f.blocks {
            for s in b.successors() {
                *preds.entry(s.to_string()).or_default() += 1;
            }
        }
        let entry = f.blocks.first().map(|b| b.label.clone());
        let candidate = f.blocks.iter().enumerate().find_map(|(i, b)| match b.terminator() {
            Some(Op::Br(t)) if Some(t) != entry.as_ref() && *t != b.label && preds.get(t) == Some(&1) => {
                Some((i, t.clone()))
            }
            _ => None,
        });
        let Some((i, target)) = candidate else { return };
        let j = f.block_index(&target).expect("branch target exists");
        let moved = std::mem::take(&mut f.blocks[j].instrs);
        f.blocks[i].instrs.pop();
        f.blocks[i].instrs.extend(moved);
        f.blocks.remove(j);
    }
}

fn remove_dead_instrs(f: &mut LFunction, pure_fns: &HashSet<String>) {
    let mut allocas: HashSet<Reg> = HashSet::new();
    let mut consts: HashMap<Reg, u64> = HashMap::new();
    for b in &f.blocks {
        for i in &b.instrs {
            match (&i.op, i.dst()) {
                (Op::Alloca(_), Some(r)) => {
                    allocas.insert(r);
                }
                (Op::Const(Const::Int(v)), Some(r)) => {
                    consts.insert(r, *v);
                }
                _ => {}
            }
        }
    }
    loop {
        let mut uses: HashMap<Reg, usize> = HashMap::new();
        for b in &f.blocks {
            for i in &b.instrs {
                for u in i.op.uses() {
                    *uses.entry(u).or_default() += 1;
                }
            }
        }
        let mut changed = false;
        for b in &mut f.blocks {
            b.instrs.retain(|i| {
                let Some(d) = i.dst() else { return true };
                if uses.contains_key(&d) || !removable(&i.op, &allocas, &consts, pure_fns) {
                    return true;
                }
                changed = true;
                false
            });
        }
        if !changed {
            return;
        }
    }
}

fn removable(op: &Op, allocas: &HashSet<Reg>, consts: &HashMap<Reg, u64>, pure_fns: &HashSet<String>) -> bool {
    match op {
        Op::Const(_) | Op::Cast(..) | Op::GepOffset { .. } | Op::Alloca(_) | Op::Cmp(..) => true,
        Op::Bin(PrimOp::SubNuw, ..) => false,
        Op::Bin(op, _, b) if op.is_division() => consts.get(b).is_some_and(|v| *v != 0),
        Op::Bin(..) => true,
        Op::Load(p) => allocas.contains(p),
        Op::Call { kind: CalleeKind::Defined, name, .. } => pure_fns.contains(name),
        Op::Call { kind: CalleeKind::Intrinsic, name, .. } => intrinsics::is_pure(name),
        _ => false,
    }
}
