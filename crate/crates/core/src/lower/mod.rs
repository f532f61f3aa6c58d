//! Translation from typed HIR to LIR.
//!
//! Every parameter and `Let` binding gets a stack slot allocated in the
//! entry block; variable reads and `Set` become loads and stores. Register
//! promotion is left to the optimizer.

mod layout;

use std::collections::HashMap;

use thiserror::Error;

pub use layout::{layout_of, size_of, Layout, UnsizedType};

use crate::hir::{Expr, ExprKind, HFunction, HModule, Rator, Stmt};
use crate::lir::{Block, CalleeKind, Const, Instr, LFunction, LGlobal, LModule, Op, Reg};
use crate::ops::{CastKind, PrimOp};
use crate::types::HType;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LowerError {
    #[error(transparent)]
    Unsized(#[from] UnsizedType),
    #[error("in {function}: {msg}")]
    Malformed { function: String, msg: String },
}

/// Lowers a type-checked module.
pub fn lower_module(m: &HModule) -> Result<LModule, LowerError> {
    let mut globals = Vec::with_capacity(m.globals.len());
    for g in &m.globals {
        let init = g
            .init
            .iter()
            .map(|e| literal_const(e).ok_or_else(|| malformed(&g.name, "global initializer is not a literal")))
            .collect::<Result<_, _>>()?;
        globals.push(LGlobal { name: g.name.clone(), ty: g.ty.clone(), init });
    }
    let functions = m.functions.iter().map(lower_function).collect::<Result<_, _>>()?;
    Ok(LModule { name: m.name.clone(), globals, functions })
}

pub fn lower_function(f: &HFunction) -> Result<LFunction, LowerError> {
    let mut cx = FnLower::new(&f.name);
    let params: Vec<(Reg, HType)> = f.params.iter().map(|(_, ty)| (cx.fresh(), ty.clone())).collect();
    for ((name, ty), (reg, _)) in f.params.iter().zip(&params) {
        let slot = cx.alloca(ty);
        cx.prologue.push(Instr::new(None, Op::Store { val: *reg, ptr: slot }));
        cx.scopes.push((name.clone(), slot, ty.clone()));
    }
    cx.stmt(&f.body)?;
    if !cx.is_terminated() {
        let t = if f.ret == HType::Void { Op::Ret(None) } else { Op::Unreachable };
        cx.terminate(t);
    }
    Ok(LFunction { name: f.name.clone(), params, ret: f.ret.clone(), attrs: f.attrs.clone(), blocks: cx.finish() })
}

fn malformed(function: &str, msg: impl Into<String>) -> LowerError {
    LowerError::Malformed { function: function.to_string(), msg: msg.into() }
}

fn literal_const(e: &Expr) -> Option<Const> {
    Some(match &e.kind {
        ExprKind::IntLit { bits, .. } => Const::Int(*bits),
        ExprKind::FloatLit { bits, .. } => Const::Float(*bits),
        ExprKind::SymLit(s) => Const::Sym(s.clone()),
        ExprKind::BoolLit(b) => Const::Bool(*b),
        ExprKind::GlobalAddr(g) => Const::Global(g.clone()),
        _ => return None,
    })
}

struct FnLower {
    fname: String,
    next_reg: u32,
    counter: u32,
    /// Block storage indexed by id; id 0 is the entry block.
    blocks: Vec<Block>,
    terminated: Vec<bool>,
    /// Block ids in the order they were first emitted into.
    order: Vec<usize>,
    cur: usize,
    allocas: Vec<Instr>,
    prologue: Vec<Instr>,
    scopes: Vec<(String, Reg, HType)>,
    labels: HashMap<String, usize>,
}

impl FnLower {
    fn new(fname: &str) -> FnLower {
        FnLower {
            fname: fname.to_string(),
            next_reg: 0,
            counter: 0,
            blocks: vec![Block { label: "entry".into(), instrs: vec![] }],
            terminated: vec![false],
            order: vec![0],
            cur: 0,
            allocas: vec![],
            prologue: vec![],
            scopes: vec![],
            labels: HashMap::new(),
        }
    }

    fn finish(mut self) -> Vec<Block> {
        let mut entry = std::mem::take(&mut self.allocas);
        entry.append(&mut self.prologue);
        entry.append(&mut self.blocks[0].instrs);
        self.blocks[0].instrs = entry;
        for id in 0..self.blocks.len() {
            if !self.order.contains(&id) {
                self.order.push(id);
            }
        }
        let mut slots: Vec<Option<Block>> = self.blocks.into_iter().map(Some).collect();
        self.order.iter().map(|&id| slots[id].take().expect("block placed twice")).collect()
    }

    fn fresh(&mut self) -> Reg {
        let r = Reg(self.next_reg);
        self.next_reg += 1;
        r
    }

    fn tick(&mut self) -> u32 {
        let n = self.counter;
        self.counter += 1;
        n
    }

    fn new_block(&mut self, construct: &str, n: u32) -> usize {
        let label = format!("{}.{}.{}", self.fname, construct, n);
        self.add_block(label)
    }

    /// Adds a block, suffixing the label if a user label already took it.
    fn add_block(&mut self, label: String) -> usize {
        let mut unique = label.clone();
        let mut k = 1;
        while self.blocks.iter().any(|b| b.label == unique) {
            unique = format!("{label}.{k}");
            k += 1;
        }
        self.blocks.push(Block { label: unique, instrs: vec![] });
        self.terminated.push(false);
        self.blocks.len() - 1
    }

    fn label_of(&self, id: usize) -> String {
        self.blocks[id].label.clone()
    }

    fn switch_to(&mut self, id: usize) {
        if !self.order.contains(&id) {
            self.order.push(id);
        }
        self.cur = id;
    }

    fn is_terminated(&self) -> bool {
        self.terminated[self.cur]
    }

    fn ensure_open(&mut self) {
        if self.is_terminated() {
            let n = self.tick();
            let id = self.new_block("dead", n);
            self.switch_to(id);
        }
    }

    fn alloca(&mut self, ty: &HType) -> Reg {
        let r = self.fresh();
        self.allocas.push(Instr::new(Some((r, HType::ptr(ty.clone()))), Op::Alloca(ty.clone())));
        r
    }

    fn emit(&mut self, ty: HType, op: Op) -> Reg {
        self.ensure_open();
        let r = self.fresh();
        self.blocks[self.cur].instrs.push(Instr::new(Some((r, ty)), op));
        r
    }

    fn emit_void(&mut self, op: Op) {
        self.ensure_open();
        self.blocks[self.cur].instrs.push(Instr::new(None, op));
    }

    /// Ends the current block; a no-op when it already ended.
    fn terminate(&mut self, op: Op) {
        if !self.is_terminated() {
            self.terminate_block(self.cur, op);
        }
    }

    fn terminate_block(&mut self, id: usize, op: Op) {
        self.blocks[id].instrs.push(Instr::new(None, op));
        self.terminated[id] = true;
    }

    fn label_block(&mut self, name: &str) -> usize {
        if let Some(&id) = self.labels.get(name) {
            return id;
        }
        let id = self.add_block(name.to_string());
        self.labels.insert(name.to_string(), id);
        id
    }

    fn lookup(&self, name: &str) -> Result<(Reg, HType), LowerError> {
        self.scopes
            .iter()
            .rev()
            .find(|(n, ..)| n == name)
            .map(|(_, r, t)| (*r, t.clone()))
            .ok_or_else(|| malformed(&self.fname, format!("unbound variable {name}")))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), LowerError> {
        match s {
            Stmt::Expr(e) => {
                self.expr(e)?;
            }
            Stmt::Block(ss) => {
                for s in ss {
                    if self.is_terminated() && !crate::hir::contains_label(s) {
                        continue;
                    }
                    self.stmt(s)?;
                }
            }
            Stmt::Void => {}
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => self.expr(e)?,
                    None => None,
                };
                self.ensure_open();
                self.terminate(Op::Ret(v));
            }
            Stmt::While(c, body) => {
                let n = self.tick();
                let header = self.new_block("header", n);
                let bodyb = self.new_block("body", n);
                let exit = self.new_block("exit", n);
                let hl = self.label_of(header);
                self.terminate(Op::Br(hl.clone()));
                self.switch_to(header);
                let cv = self.value(c)?;
                self.terminate(Op::CondBr { cond: cv, then: self.label_of(bodyb), els: self.label_of(exit) });
                self.switch_to(bodyb);
                self.stmt(body)?;
                self.terminate(Op::Br(hl));
                self.switch_to(exit);
            }
            Stmt::If(c, t, e) => {
                let cv = self.value(c)?;
                let n = self.tick();
                let then = self.new_block("then", n);
                let els = self.new_block("else", n);
                self.terminate(Op::CondBr { cond: cv, then: self.label_of(then), els: self.label_of(els) });
                let mut open = vec![];
                self.switch_to(then);
                self.stmt(t)?;
                if !self.is_terminated() {
                    open.push(self.cur);
                }
                self.switch_to(els);
                self.stmt(e)?;
                if !self.is_terminated() {
                    open.push(self.cur);
                }
                self.join(open, n);
            }
            Stmt::Set(x, e) => {
                let v = self.value(e)?;
                let (slot, _) = self.lookup(x)?;
                self.emit_void(Op::Store { val: v, ptr: slot });
            }
            Stmt::Switch(e, cases, default) => {
                let v = self.value(e)?;
                let n = self.tick();
                let mut targets = Vec::with_capacity(cases.len());
                let mut table = Vec::with_capacity(cases.len());
                for (k, (c, _)) in cases.iter().enumerate() {
                    let id = self.new_block(&format!("case{k}"), n);
                    let c = literal_const(c).ok_or_else(|| malformed(&self.fname, "switch case is not a literal"))?;
                    table.push((c, self.label_of(id)));
                    targets.push(id);
                }
                let d = self.new_block("default", n);
                self.terminate(Op::Switch { val: v, cases: table, default: self.label_of(d) });
                let mut open = vec![];
                for (id, (_, body)) in targets.into_iter().zip(cases) {
                    self.switch_to(id);
                    self.stmt(body)?;
                    if !self.is_terminated() {
                        open.push(self.cur);
                    }
                }
                self.switch_to(d);
                self.stmt(default)?;
                if !self.is_terminated() {
                    open.push(self.cur);
                }
                self.join(open, n);
            }
            Stmt::Label(name, body) => {
                let id = self.label_block(name);
                let l = self.label_of(id);
                self.terminate(Op::Br(l));
                self.switch_to(id);
                self.stmt(body)?;
            }
            Stmt::Jump(name) => {
                let id = self.label_block(name);
                let l = self.label_of(id);
                self.ensure_open();
                self.terminate(Op::Br(l));
            }
            Stmt::Store(v, a) => {
                let v = self.value(v)?;
                let a = self.value(a)?;
                self.emit_void(Op::Store { val: v, ptr: a });
            }
        }
        Ok(())
    }

    /// Branches every open arm to a fresh join block, if any arm is open.
    /// With no open arms the current block stays terminated.
    fn join(&mut self, open: Vec<usize>, n: u32) {
        if open.is_empty() {
            return;
        }
        let j = self.new_block("join", n);
        let jl = self.label_of(j);
        for id in open {
            self.terminate_block(id, Op::Br(jl.clone()));
        }
        self.switch_to(j);
    }

    fn value(&mut self, e: &Expr) -> Result<Reg, LowerError> {
        self.expr(e)?.ok_or_else(|| malformed(&self.fname, "void expression used as a value"))
    }

    fn expr(&mut self, e: &Expr) -> Result<Option<Reg>, LowerError> {
        let ty = e.ty.clone().ok_or_else(|| malformed(&self.fname, "expression is not type checked"))?;
        if let Some(c) = literal_const(e) {
            return Ok(Some(self.emit(ty, Op::Const(c))));
        }
        Ok(Some(match &e.kind {
            ExprKind::Var(x) => {
                let (slot, t) = self.lookup(x)?;
                self.emit(t, Op::Load(slot))
            }
            ExprKind::App(rator, args) => {
                let args = args.iter().map(|a| self.value(a)).collect::<Result<Vec<_>, _>>()?;
                let (kind, sig) = match rator {
                    Rator::Defined(_) => (CalleeKind::Defined, None),
                    Rator::Intrinsic(_, s) => (CalleeKind::Intrinsic, Some(s.clone())),
                    Rator::External(_, s) => (CalleeKind::External, Some(s.clone())),
                    Rator::Host(_, s) => (CalleeKind::Host, Some(s.clone())),
                };
                let sig = sig.unwrap_or_else(|| {
                    let params = args_types(e);
                    crate::types::FnSig::new(params, ty.clone())
                });
                let op = Op::Call { kind, name: rator.name().to_string(), sig, args };
                if ty == HType::Void {
                    self.emit_void(op);
                    return Ok(None);
                }
                self.emit(ty, op)
            }
            ExprKind::Let(bs, body, result) => {
                let mut inits = Vec::with_capacity(bs.len());
                for b in bs {
                    inits.push(self.value(&b.init)?);
                }
                let depth = self.scopes.len();
                for (b, v) in bs.iter().zip(inits) {
                    let slot = self.alloca(&b.ty);
                    self.emit_void(Op::Store { val: v, ptr: slot });
                    self.scopes.push((b.name.clone(), slot, b.ty.clone()));
                }
                self.stmt(body)?;
                let r = self.expr(result);
                self.scopes.truncate(depth);
                return r;
            }
            ExprKind::Gep(base, idx) => self.gep(base, idx, ty)?,
            ExprKind::Load(a) => {
                let a = self.value(a)?;
                self.emit(ty, Op::Load(a))
            }
            ExprKind::Cast(kind, a, to) => {
                let a = self.value(a)?;
                self.emit(to.clone(), Op::Cast(*kind, a))
            }
            ExprKind::Prim(op, args) => {
                if args.len() != 2 {
                    return Err(malformed(&self.fname, format!("{} expects two operands", op.name())));
                }
                let a = self.value(&args[0])?;
                let b = self.value(&args[1])?;
                let op = if op.is_compare() { Op::Cmp(*op, a, b) } else { Op::Bin(*op, a, b) };
                self.emit(ty, op)
            }
            _ => unreachable!("literals handled above"),
        }))
    }

    /// Constant indices fold into a single byte offset; dynamic indices
    /// are widened to i64 and scaled by the element size.
    fn gep(&mut self, base: &Expr, idx: &[Expr], ty: HType) -> Result<Reg, LowerError> {
        let b = self.value(base)?;
        let mut cur = base
            .ty()
            .pointee()
            .cloned()
            .ok_or_else(|| malformed(&self.fname, "gep base is not a pointer"))?;
        let mut constant: i64 = 0;
        let mut dynamic: Option<Reg> = None;
        for (k, i) in idx.iter().enumerate() {
            let (scale, next) = if k == 0 {
                (size_of(&cur)?, cur.clone())
            } else {
                match &cur {
                    HType::Array(elem, _) => (size_of(elem)?, (**elem).clone()),
                    HType::Struct(fields) => {
                        let field = match &i.kind {
                            ExprKind::IntLit { bits, .. } => *bits as usize,
                            _ => return Err(malformed(&self.fname, "struct index is not a literal")),
                        };
                        let off = layout_of(&cur)?.field_offsets.get(field).copied().ok_or_else(|| {
                            malformed(&self.fname, format!("struct field {field} out of range"))
                        })?;
                        constant = constant.wrapping_add(off as i64);
                        cur = fields[field].1.clone();
                        continue;
                    }
                    other => return Err(malformed(&self.fname, format!("cannot index into {other}"))),
                }
            };
            cur = next;
            match &i.kind {
                ExprKind::IntLit { bits, width, .. } => {
                    let v = crate::ops::sign_extend(*width, *bits);
                    constant = constant.wrapping_add(v.wrapping_mul(scale as i64));
                }
                _ => {
                    let mut r = self.value(i)?;
                    let it = i.ty().clone();
                    if it != HType::i64() {
                        r = self.emit(HType::i64(), Op::Cast(CastKind::Sext, r));
                    }
                    if scale != 1 {
                        let s = self.emit(HType::i64(), Op::Const(Const::Int(scale)));
                        r = self.emit(HType::i64(), Op::Bin(PrimOp::Mul, r, s));
                    }
                    dynamic = Some(match dynamic {
                        Some(d) => self.emit(HType::i64(), Op::Bin(PrimOp::Add, d, r)),
                        None => r,
                    });
                }
            }
        }
        let offset = match (dynamic, constant) {
            (Some(d), 0) => d,
            (Some(d), c) => {
                let c = self.emit(HType::i64(), Op::Const(Const::Int(c as u64)));
                self.emit(HType::i64(), Op::Bin(PrimOp::Add, d, c))
            }
            (None, c) => self.emit(HType::i64(), Op::Const(Const::Int(c as u64))),
        };
        Ok(self.emit(ty, Op::GepOffset { base: b, offset }))
    }
}

fn args_types(e: &Expr) -> Vec<HType> {
    match &e.kind {
        ExprKind::App(_, args) => args.iter().map(|a| a.ty().clone()).collect(),
        _ => vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hir::build::*;
    use crate::hir::typecheck_module;
    use crate::lir::{parse_module, verify};

    fn lower_one(f: HFunction) -> LFunction {
        let m = typecheck_module(&HModule::new("t").with(f).unwrap()).unwrap();
        let l = lower_module(&m).unwrap();
        verify(&l).unwrap();
        l.functions.into_iter().next().unwrap()
    }

    #[test]
    fn pow_blocks() {
        let m = typecheck_module(&HModule::new("t").with(pow_function()).unwrap()).unwrap();
        let l = lower_module(&m).unwrap();
        verify(&l).unwrap();
        let labels: Vec<_> = l.functions[0].blocks.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["entry", "pow.then.0", "pow.else.0"]);
        let text = crate::lir::dump_module(&l);
        assert_eq!(parse_module(&text).unwrap(), l);
    }

    #[test]
    fn while_adds_three_blocks() {
        let f = function(
            "w",
            vec![("n", HType::i64())],
            HType::i64(),
            block(vec![while_(icmp_ult(var("n"), ui64(10)), set("n", add1(var("n")))), ret(var("n"))]),
            &[],
        )
        .unwrap();
        let base = function("b", vec![("n", HType::i64())], HType::i64(), ret(var("n")), &[]).unwrap();
        assert_eq!(lower_one(f).blocks.len(), lower_one(base).blocks.len() + 3);
    }

    #[test]
    fn gep_struct_offset() {
        let st = HType::Struct(vec![("a".into(), HType::i32()), ("b".into(), HType::i64())]);
        let f = function(
            "g",
            vec![("p", HType::ptr(st))],
            HType::i64(),
            ret(load(gep(var("p"), vec![ui64(1), ui64(1)]))),
            &[],
        )
        .unwrap();
        let f = lower_one(f);
        let consts: Vec<_> = f.blocks[0]
            .instrs
            .iter()
            .filter_map(|i| match &i.op {
                Op::Const(Const::Int(c)) => Some(*c),
                _ => None,
            })
            .collect();
        assert!(consts.contains(&24), "{consts:?}");
    }

    #[test]
    fn labels_and_jumps() {
        let f = function(
            "l",
            vec![("n", HType::i64())],
            HType::i64(),
            block(vec![jump("b"), label("a", ret(var("n"))), label("b", block(vec![set("n", ui64(3)), jump("a")]))]),
            &[],
        )
        .unwrap();
        let f = lower_one(f);
        assert!(f.block("a").is_some() && f.block("b").is_some());
    }
}
