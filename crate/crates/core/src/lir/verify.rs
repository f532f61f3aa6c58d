//! Structural and type verification of low-IR modules.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::ir::*;
use crate::intrinsics;
use crate::types::HType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyErrorKind {
    #[error("function has no blocks")]
    NoBlocks,
    #[error("duplicate function name")]
    DuplicateFunction,
    #[error("duplicate block label")]
    DuplicateLabel,
    #[error("block is empty")]
    EmptyBlock,
    #[error("block does not end in a terminator")]
    MissingTerminator,
    #[error("terminator is followed by more instructions")]
    MultipleTerminators,
    #[error("branch to unknown block `{0}`")]
    UnknownBlock(String),
    #[error("entry block has predecessors")]
    EntryHasPredecessors,
    #[error("register {0} assigned more than once")]
    Redefinition(Reg),
    #[error("register {0} is never defined")]
    UndefinedRegister(Reg),
    #[error("register {0} may be used before its definition")]
    UseBeforeDef(Reg),
    #[error("type error: {0}")]
    TypeMismatch(String),
    #[error("call to unknown function `{0}`")]
    UnknownFunction(String),
    #[error("call to unknown intrinsic `{0}`")]
    UnknownIntrinsic(String),
    #[error("reference to unknown global `{0}`")]
    UnknownGlobal(String),
    #[error("duplicate switch case")]
    DuplicateCase,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{function}{}{}: {kind}", block.as_ref().map(|b| format!(" block {b}")).unwrap_or_default(), instr.map(|i| format!(" instr {i}")).unwrap_or_default())]
pub struct VerifyError {
    pub function: String,
    pub block: Option<String>,
    pub instr: Option<usize>,
    pub kind: VerifyErrorKind,
}

/// Verifies every function; returns all diagnostics found.
pub fn verify(m: &LModule) -> Result<(), Vec<VerifyError>> {
    let mut errors = Vec::new();
    let mut names = HashSet::new();
    for f in &m.functions {
        if !names.insert(f.name.as_str()) {
            errors.push(VerifyError { function: f.name.clone(), block: None, instr: None, kind: VerifyErrorKind::DuplicateFunction });
        }
        verify_function(m, f, &mut errors);
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize, full: bool) -> Bits {
        Bits(vec![if full { u64::MAX } else { 0 }; n.div_ceil(64).max(1)])
    }
    fn set(&mut self, i: u32) {
        self.0[i as usize / 64] |= 1 << (i % 64);
    }
    fn get(&self, i: u32) -> bool {
        self.0[i as usize / 64] & (1 << (i % 64)) != 0
    }
}

fn verify_function(m: &LModule, f: &LFunction, errors: &mut Vec<VerifyError>) {
    let before = errors.len();
    let err = |errors: &mut Vec<VerifyError>, block: Option<&str>, instr: Option<usize>, kind| {
        errors.push(VerifyError { function: f.name.clone(), block: block.map(str::to_string), instr, kind })
    };
    if f.blocks.is_empty() {
        err(errors, None, None, VerifyErrorKind::NoBlocks);
        return;
    }
    let mut index = HashMap::new();
    for (i, b) in f.blocks.iter().enumerate() {
        if index.insert(b.label.as_str(), i).is_some() {
            err(errors, Some(&b.label), None, VerifyErrorKind::DuplicateLabel);
        }
    }
    // Shape of each block and branch targets.
    for b in &f.blocks {
        if b.instrs.is_empty() {
            err(errors, Some(&b.label), None, VerifyErrorKind::EmptyBlock);
            continue;
        }
        let last = b.instrs.len() - 1;
        for (k, i) in b.instrs.iter().enumerate() {
            if i.op.is_terminator() && k != last {
                err(errors, Some(&b.label), Some(k), VerifyErrorKind::MultipleTerminators);
            }
        }
        if !b.instrs[last].op.is_terminator() {
            err(errors, Some(&b.label), Some(last), VerifyErrorKind::MissingTerminator);
        }
        for t in b.successors() {
            if !index.contains_key(t) {
                err(errors, Some(&b.label), Some(last), VerifyErrorKind::UnknownBlock(t.to_string()));
            }
            if t == f.blocks[0].label {
                err(errors, Some(&b.label), Some(last), VerifyErrorKind::EntryHasPredecessors);
            }
        }
    }
    // Single assignment and register types.
    let mut types: HashMap<Reg, HType> = HashMap::new();
    for (r, t) in &f.params {
        if types.insert(*r, t.clone()).is_some() {
            err(errors, None, None, VerifyErrorKind::Redefinition(*r));
        }
    }
    for b in &f.blocks {
        for (k, i) in b.instrs.iter().enumerate() {
            if let Some((r, t)) = &i.result {
                if types.insert(*r, t.clone()).is_some() {
                    err(errors, Some(&b.label), Some(k), VerifyErrorKind::Redefinition(*r));
                }
            }
        }
    }
    for b in &f.blocks {
        for (k, i) in b.instrs.iter().enumerate() {
            for u in i.op.uses() {
                if !types.contains_key(&u) {
                    err(errors, Some(&b.label), Some(k), VerifyErrorKind::UndefinedRegister(u));
                }
            }
        }
    }
    if errors.len() > before {
        return;
    }
    check_defs(f, &index, errors);
    for b in &f.blocks {
        for (k, i) in b.instrs.iter().enumerate() {
            if let Err(kind) = check_types(m, f, &types, i) {
                err(errors, Some(&b.label), Some(k), kind);
            }
        }
    }
}

/// Must-defined dataflow in reverse postorder; unreachable blocks are not
/// checked.
fn check_defs(f: &LFunction, index: &HashMap<&str, usize>, errors: &mut Vec<VerifyError>) {
    let n = f.blocks.len();
    let nregs = f.reg_count() as usize;
    let succs: Vec<Vec<usize>> =
        f.blocks.iter().map(|b| b.successors().iter().filter_map(|s| index.get(s).copied()).collect()).collect();
    // Reverse postorder from the entry.
    let mut order = Vec::new();
    let mut seen = vec![false; n];
    let mut stack = vec![(0usize, 0usize)];
    seen[0] = true;
    while let Some((b, k)) = stack.pop() {
        if k < succs[b].len() {
            stack.push((b, k + 1));
            let s = succs[b][k];
            if !seen[s] {
                seen[s] = true;
                stack.push((s, 0));
            }
        } else {
            order.push(b);
        }
    }
    order.reverse();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &b in &order {
        for &s in &succs[b] {
            preds[s].push(b);
        }
    }
    let defs: Vec<Vec<Reg>> = f.blocks.iter().map(|b| b.instrs.iter().filter_map(Instr::dst).collect()).collect();
    let mut out: Vec<Bits> = (0..n).map(|_| Bits::new(nregs, true)).collect();
    let entry_in = {
        let mut b = Bits::new(nregs, false);
        for (r, _) in &f.params {
            b.set(r.0);
        }
        b
    };
    let block_in = |b: usize, out: &[Bits]| -> Bits {
        if b == 0 {
            return Bits(entry_in.0.clone());
        }
        let mut acc = Bits::new(nregs, true);
        for &p in &preds[b] {
            for (w, o) in acc.0.iter_mut().zip(&out[p].0) {
                *w &= o;
            }
        }
        acc
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in &order {
            let mut cur = block_in(b, &out);
            for r in &defs[b] {
                cur.set(r.0);
            }
            if cur.0 != out[b].0 {
                out[b] = cur;
                changed = true;
            }
        }
    }
    for &b in &order {
        let mut cur = block_in(b, &out);
        for (k, i) in f.blocks[b].instrs.iter().enumerate() {
            for u in i.op.uses() {
                if !cur.get(u.0) {
                    errors.push(VerifyError {
                        function: f.name.clone(),
                        block: Some(f.blocks[b].label.clone()),
                        instr: Some(k),
                        kind: VerifyErrorKind::UseBeforeDef(u),
                    });
                }
            }
            if let Some(r) = i.dst() {
                cur.set(r.0);
            }
        }
    }
}

fn check_types(m: &LModule, f: &LFunction, types: &HashMap<Reg, HType>, i: &Instr) -> Result<(), VerifyErrorKind> {
    let ty = |r: &Reg| types[r].clone();
    let bad = |msg: String| Err(VerifyErrorKind::TypeMismatch(msg));
    let result = i.result.as_ref().map(|(_, t)| t.clone());
    let needs_result = !i.op.is_terminator()
        && !matches!(i.op, Op::Store { .. })
        && !matches!(&i.op, Op::Call { sig, .. } if *sig.ret == HType::Void);
    if needs_result != result.is_some() {
        return bad(format!("`{}` {} a result register", i.op.opcode(), if needs_result { "needs" } else { "cannot have" }));
    }
    let rt = result.unwrap_or(HType::Void);
    match &i.op {
        Op::Alloca(t) => {
            if rt != HType::ptr(t.clone()) {
                return bad(format!("alloca of {t} produces {rt}"));
            }
        }
        Op::Load(p) => match ty(p) {
            HType::Ptr(e) if *e == rt && rt.is_scalar() => {}
            t => return bad(format!("load through {t} into {rt}")),
        },
        Op::Store { val, ptr } => match ty(ptr) {
            HType::Ptr(e) if *e == ty(val) && e.is_scalar() => {}
            t => return bad(format!("store of {} through {t}", ty(val))),
        },
        Op::Bin(op, a, b) | Op::Cmp(op, a, b) => {
            let (ta, tb) = (ty(a), ty(b));
            let cmp_ok = matches!(i.op, Op::Cmp(..)) == op.is_compare();
            if ta != tb || !op.accepts(&ta) || !cmp_ok || op.result_type(&ta) != rt {
                return bad(format!("{op} on {ta} and {tb} producing {rt}"));
            }
        }
        Op::Cast(kind, a) => {
            if !kind.accepts(&ty(a), &rt) {
                return bad(format!("{kind} from {} to {rt}", ty(a)));
            }
        }
        Op::GepOffset { base, offset } => {
            if !matches!(ty(base), HType::Ptr(_)) || ty(offset) != HType::i64() || !matches!(rt, HType::Ptr(_)) {
                return bad(format!("gep-offset on {} and {}", ty(base), ty(offset)));
            }
        }
        Op::Call { kind, name, sig, args } => {
            match kind {
                CalleeKind::Defined => match m.function(name) {
                    Some(g) if g.sig() == *sig => {}
                    Some(g) => return bad(format!("call signature {sig} does not match {}", g.sig())),
                    None => return Err(VerifyErrorKind::UnknownFunction(name.clone())),
                },
                CalleeKind::Intrinsic => match intrinsics::signature(name) {
                    Some(t) if t == *sig => {}
                    Some(t) => return bad(format!("intrinsic signature {sig} does not match {t}")),
                    None => return Err(VerifyErrorKind::UnknownIntrinsic(name.clone())),
                },
                CalleeKind::External | CalleeKind::Host => {}
            }
            if args.len() != sig.params.len() || args.iter().zip(&sig.params).any(|(a, p)| ty(a) != *p) {
                return bad(format!("arguments do not match {sig}"));
            }
            if *sig.ret != HType::Void && rt != *sig.ret {
                return bad(format!("call result {rt} does not match {sig}"));
            }
        }
        Op::Const(c) => {
            let ok = match c {
                Const::Int(_) => rt.is_int(),
                Const::Float(_) => rt.is_float(),
                Const::Sym(_) => rt == HType::Sym,
                Const::Bool(_) => rt == HType::HostBool,
                Const::Global(g) => match m.global(g) {
                    None => return Err(VerifyErrorKind::UnknownGlobal(g.clone())),
                    Some(gl) => {
                        let elem = match &gl.ty {
                            HType::Array(e, _) => (**e).clone(),
                            t => t.clone(),
                        };
                        rt == HType::ptr(elem)
                    }
                },
            };
            if !ok {
                return bad(format!("constant {c:?} of type {rt}"));
            }
        }
        Op::Ret(v) => {
            let t = v.as_ref().map(ty).unwrap_or(HType::Void);
            if t != f.ret {
                return bad(format!("return of {t} from function returning {}", f.ret));
            }
        }
        Op::CondBr { cond, .. } => {
            if !ty(cond).is_condition() {
                return bad(format!("branch on {}", ty(cond)));
            }
        }
        Op::Switch { val, cases, .. } => {
            let t = ty(val);
            let mut seen = HashSet::new();
            for (c, _) in cases {
                let ok = matches!((c, &t), (Const::Int(_), HType::Int(_)) | (Const::Sym(_), HType::Sym));
                if !ok {
                    return bad(format!("switch case {c:?} on {t}"));
                }
                if !seen.insert(c) {
                    return Err(VerifyErrorKind::DuplicateCase);
                }
            }
            if !matches!(t, HType::Int(_) | HType::Sym) {
                return bad(format!("switch on {t}"));
            }
        }
        Op::Br(_) | Op::Unreachable => {}
    }
    Ok(())
}
