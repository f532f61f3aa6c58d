use std::collections::BTreeSet;
use std::fmt;

use crate::ops::{CastKind, PrimOp};
use crate::types::{FnSig, HType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(pub u32);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Const {
    /// Integer bits, interpreted at the result register's width.
    Int(u64),
    /// IEEE bits; f32 constants hold the f32 pattern in the low 32 bits.
    Float(u64),
    Sym(String),
    Bool(bool),
    /// Address of a module global.
    Global(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CalleeKind {
    Defined,
    Intrinsic,
    External,
    Host,
}

impl CalleeKind {
    pub fn name(&self) -> &'static str {
        match self {
            CalleeKind::Defined => "defined",
            CalleeKind::Intrinsic => "intrinsic",
            CalleeKind::External => "external",
            CalleeKind::Host => "host",
        }
    }

    pub fn from_name(s: &str) -> Option<CalleeKind> {
        Some(match s {
            "defined" => CalleeKind::Defined,
            "intrinsic" => CalleeKind::Intrinsic,
            "external" => CalleeKind::External,
            "host" => CalleeKind::Host,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Alloca(HType),
    Load(Reg),
    Store { val: Reg, ptr: Reg },
    Bin(PrimOp, Reg, Reg),
    Cmp(PrimOp, Reg, Reg),
    /// Target type is the result type.
    Cast(CastKind, Reg),
    GepOffset { base: Reg, offset: Reg },
    Call { kind: CalleeKind, name: String, sig: FnSig, args: Vec<Reg> },
    Const(Const),
    Ret(Option<Reg>),
    Br(String),
    CondBr { cond: Reg, then: String, els: String },
    Switch { val: Reg, cases: Vec<(Const, String)>, default: String },
    Unreachable,
}

impl Op {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Op::Ret(_) | Op::Br(_) | Op::CondBr { .. } | Op::Switch { .. } | Op::Unreachable)
    }

    /// Opcode name used in the text form and in static counts. Binary
    /// operators and comparisons report their operator name.
    pub fn opcode(&self) -> &'static str {
        match self {
            Op::Alloca(_) => "alloca",
            Op::Load(_) => "load",
            Op::Store { .. } => "store",
            Op::Bin(op, ..) | Op::Cmp(op, ..) => op.name(),
            Op::Cast(..) => "cast",
            Op::GepOffset { .. } => "gep-offset",
            Op::Call { .. } => "call",
            Op::Const(_) => "const",
            Op::Ret(_) => "ret",
            Op::Br(_) => "br",
            Op::CondBr { .. } => "condbr",
            Op::Switch { .. } => "switch",
            Op::Unreachable => "unreachable",
        }
    }

    /// Registers read by this instruction, in operand order.
    pub fn uses(&self) -> Vec<Reg> {
        match self {
            Op::Load(r) | Op::Cast(_, r) | Op::Ret(Some(r)) => vec![*r],
            Op::Store { val, ptr } => vec![*val, *ptr],
            Op::Bin(_, a, b) | Op::Cmp(_, a, b) => vec![*a, *b],
            Op::GepOffset { base, offset } => vec![*base, *offset],
            Op::Call { args, .. } => args.clone(),
            Op::CondBr { cond, .. } => vec![*cond],
            Op::Switch { val, .. } => vec![*val],
            Op::Alloca(_) | Op::Const(_) | Op::Ret(None) | Op::Br(_) | Op::Unreachable => vec![],
        }
    }

    pub fn uses_mut(&mut self) -> Vec<&mut Reg> {
        match self {
            Op::Load(r) | Op::Cast(_, r) | Op::Ret(Some(r)) => vec![r],
            Op::Store { val, ptr } => vec![val, ptr],
            Op::Bin(_, a, b) | Op::Cmp(_, a, b) => vec![a, b],
            Op::GepOffset { base, offset } => vec![base, offset],
            Op::Call { args, .. } => args.iter_mut().collect(),
            Op::CondBr { cond, .. } => vec![cond],
            Op::Switch { val, .. } => vec![val],
            Op::Alloca(_) | Op::Const(_) | Op::Ret(None) | Op::Br(_) | Op::Unreachable => vec![],
        }
    }

    /// Branch targets of a terminator.
    pub fn successors(&self) -> Vec<&str> {
        match self {
            Op::Br(t) => vec![t],
            Op::CondBr { then, els, .. } => vec![then, els],
            Op::Switch { cases, default, .. } => {
                let mut v: Vec<&str> = cases.iter().map(|(_, l)| l.as_str()).collect();
                v.push(default);
                v
            }
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instr {
    pub result: Option<(Reg, HType)>,
    pub op: Op,
}

impl Instr {
    pub fn new(result: Option<(Reg, HType)>, op: Op) -> Instr {
        Instr { result, op }
    }

    pub fn dst(&self) -> Option<Reg> {
        self.result.as_ref().map(|(r, _)| *r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    /// Body instructions followed by exactly one terminator (in a
    /// well-formed block).
    pub instrs: Vec<Instr>,
}

impl Block {
    pub fn terminator(&self) -> Option<&Op> {
        self.instrs.last().map(|i| &i.op).filter(|op| op.is_terminator())
    }

    pub fn successors(&self) -> Vec<&str> {
        self.terminator().map(|t| t.successors()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LFunction {
    pub name: String,
    pub params: Vec<(Reg, HType)>,
    pub ret: HType,
    pub attrs: BTreeSet<String>,
    /// Entry block first.
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LGlobal {
    pub name: String,
    pub ty: HType,
    pub init: Vec<Const>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LModule {
    pub name: String,
    pub globals: Vec<LGlobal>,
    pub functions: Vec<LFunction>,
}

impl LFunction {
    pub fn sig(&self) -> FnSig {
        FnSig::new(self.params.iter().map(|(_, t)| t.clone()).collect(), self.ret.clone())
    }

    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    /// Highest register number in use plus one.
    pub fn reg_count(&self) -> u32 {
        let mut n = 0;
        for (r, _) in &self.params {
            n = n.max(r.0 + 1);
        }
        for b in &self.blocks {
            for i in &b.instrs {
                if let Some(r) = i.dst() {
                    n = n.max(r.0 + 1);
                }
            }
        }
        n
    }

    /// Indices of blocks reachable from the entry block.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.blocks.len()];
        if self.blocks.is_empty() {
            return seen;
        }
        let index: std::collections::HashMap<&str, usize> =
            self.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for s in self.blocks[i].successors() {
                if let Some(&j) = index.get(s) {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        seen
    }
}

impl LModule {
    pub fn function(&self, name: &str) -> Option<&LFunction> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut LFunction> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&LGlobal> {
        self.globals.iter().find(|g| g.name == name)
    }
}
