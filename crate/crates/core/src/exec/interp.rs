use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::intrinsics;
use crate::lir::{reg_types, CalleeKind, Const, LFunction, LModule, Op, Reg};
use crate::lower::size_of;
use crate::ops::{eval_cast, eval_prim, ArithTrap, CastKind, PrimOp, Value};
use crate::types::{FnSig, HType};

use super::host::{HostFn, HostRegistry, Marshal};
use super::memory::{BufKind, Interner, Memory};

/// Call depth at which execution traps instead of recursing further.
pub const MAX_DEPTH: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrapKind {
    #[error("div-by-zero")]
    DivByZero,
    #[error("oob-load")]
    OobLoad,
    #[error("oob-store")]
    OobStore,
    #[error("nuw-overflow")]
    NuwOverflow,
    #[error("unreachable")]
    Unreachable,
    #[error("use-after-free")]
    UseAfterFree,
    /// Access with a width that does not match the buffer, or through a
    /// value that is not a pointer.
    #[error("bad-access")]
    BadAccess,
    #[error("alloc-failed")]
    AllocFailed,
    #[error("stack-overflow")]
    StackOverflow,
    #[error("host-error: {0}")]
    HostError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trap {kind} at {function}/{block}/{instr}")]
pub struct Trap {
    pub kind: TrapKind,
    pub function: String,
    pub block: String,
    pub instr: usize,
}

/// Dynamic counters for one invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ExecStats {
    /// Every executed instruction, terminators included.
    pub instructions: u64,
    pub loads: u64,
    pub stores: u64,
    pub calls: u64,
    /// Taken branches along a retreating edge of the control-flow graph.
    pub back_edges: u64,
    pub allocations: u64,
}

impl ExecStats {
    pub fn add(&mut self, o: &ExecStats) {
        self.instructions += o.instructions;
        self.loads += o.loads;
        self.stores += o.stores;
        self.calls += o.calls;
        self.back_edges += o.back_edges;
        self.allocations += o.allocations;
    }
}

impl fmt::Display for ExecStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "instructions={}", self.instructions)?;
        writeln!(f, "loads={}", self.loads)?;
        writeln!(f, "stores={}", self.stores)?;
        writeln!(f, "calls={}", self.calls)?;
        writeln!(f, "back_edges={}", self.back_edges)?;
        write!(f, "allocations={}", self.allocations)
    }
}

const NO_DST: u32 = u32::MAX;

#[derive(Clone)]
enum Callee {
    Defined(usize),
    Math(&'static str, bool),
    Malloc,
    Free,
    Host(String, HostFn),
}

#[derive(Clone)]
enum XOp {
    Const(Value),
    Alloca { size: u64, elem: HType },
    Load { ptr: u32, ty: HType },
    Store { val: u32, ptr: u32, ty: HType },
    Prim(PrimOp, u32, u32),
    Cast(CastKind, u32, HType),
    Gep(u32, u32),
    Call { callee: Callee, args: Vec<u32>, sig: FnSig },
    Ret(Option<u32>),
    Br(usize),
    CondBr(u32, usize, usize),
    Switch(u32, Vec<(Value, usize)>, usize),
    Unreachable,
}

#[derive(Clone)]
struct XInstr {
    dst: u32,
    op: XOp,
}

#[derive(Clone)]
struct XBlock {
    label: String,
    instrs: Vec<XInstr>,
    /// Successors reached through a retreating edge.
    back: Vec<usize>,
}

#[derive(Clone)]
pub(crate) struct XFunction {
    pub name: String,
    pub sig: FnSig,
    nregs: usize,
    params: Vec<u32>,
    blocks: Vec<XBlock>,
}

/// A verified LIR module resolved for execution.
#[derive(Clone)]
pub(crate) struct Program {
    pub funcs: Vec<XFunction>,
    pub index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unresolved host function {0}")]
    UnresolvedHostFunction(String),
    #[error("host function {name} is registered as {registered} but called as {used}")]
    HostSignatureMismatch { name: String, registered: FnSig, used: FnSig },
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("unknown global {0}")]
    UnknownGlobal(String),
    #[error("unknown intrinsic {0}")]
    UnknownIntrinsic(String),
}

impl Program {
    pub fn prepare(
        m: &LModule,
        registry: &HostRegistry,
        globals: &HashMap<String, u32>,
        interner: &mut Interner,
    ) -> Result<Program, ResolveError> {
        let index: HashMap<String, usize> = m.functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();
        let funcs = m
            .functions
            .iter()
            .map(|f| prepare_function(f, &index, registry, globals, interner))
            .collect::<Result<_, _>>()?;
        Ok(Program { funcs, index })
    }
}

fn const_value(c: &Const, ty: &HType, globals: &HashMap<String, u32>, interner: &mut Interner) -> Result<Value, ResolveError> {
    Ok(match (c, ty) {
        (Const::Int(b), HType::Int(w)) => Value::Int { width: *w, bits: crate::ops::mask(*w, *b) },
        (Const::Float(b), HType::F32) => Value::F32(*b as u32),
        (Const::Float(b), _) => Value::F64(*b),
        (Const::Sym(s), _) => Value::Sym(interner.intern(s)),
        (Const::Bool(b), _) => Value::Bool(*b),
        (Const::Global(g), _) => {
            Value::Ptr { buf: *globals.get(g).ok_or_else(|| ResolveError::UnknownGlobal(g.clone()))?, off: 0 }
        }
        (Const::Int(b), _) => Value::i64(*b as i64),
    })
}

/// Retreating edges found by a depth-first walk from the entry block.
fn back_edges(f: &LFunction, index: &HashMap<&str, usize>) -> Vec<Vec<usize>> {
    let n = f.blocks.len();
    let succ: Vec<Vec<usize>> =
        f.blocks.iter().map(|b| b.successors().iter().filter_map(|s| index.get(s).copied()).collect()).collect();
    let mut back = vec![vec![]; n];
    let mut state = vec![0u8; n];
    if n == 0 {
        return back;
    }
    let mut stack = vec![(0usize, 0usize)];
    state[0] = 1;
    while let Some(&mut (b, ref mut k)) = stack.last_mut() {
        if *k < succ[b].len() {
            let s = succ[b][*k];
            *k += 1;
            match state[s] {
                0 => {
                    state[s] = 1;
                    stack.push((s, 0));
                }
                1 => back[b].push(s),
                _ => {}
            }
        } else {
            state[b] = 2;
            stack.pop();
        }
    }
    back
}

fn prepare_function(
    f: &LFunction,
    index: &HashMap<String, usize>,
    registry: &HostRegistry,
    globals: &HashMap<String, u32>,
    interner: &mut Interner,
) -> Result<XFunction, ResolveError> {
    let types = reg_types(f);
    let labels: HashMap<&str, usize> = f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    let back = back_edges(f, &labels);
    let target = |l: &str| labels[l];
    let r = |x: &Reg| x.0;
    let mut blocks = Vec::with_capacity(f.blocks.len());
    for (bi, b) in f.blocks.iter().enumerate() {
        let mut instrs = Vec::with_capacity(b.instrs.len());
        for i in &b.instrs {
            let ty = i.result.as_ref().map(|(_, t)| t.clone()).unwrap_or(HType::Void);
            let op = match &i.op {
                Op::Const(c) => XOp::Const(const_value(c, &ty, globals, interner)?),
                Op::Alloca(t) => XOp::Alloca { size: size_of(t).unwrap_or(0), elem: t.clone() },
                Op::Load(p) => XOp::Load { ptr: r(p), ty: ty.clone() },
                Op::Store { val, ptr } => XOp::Store { val: r(val), ptr: r(ptr), ty: types[val].clone() },
                Op::Bin(op, a, b) | Op::Cmp(op, a, b) => XOp::Prim(*op, r(a), r(b)),
                Op::Cast(k, a) => XOp::Cast(*k, r(a), ty.clone()),
                Op::GepOffset { base, offset } => XOp::Gep(r(base), r(offset)),
                Op::Call { kind, name, sig, args } => {
                    let callee = match kind {
                        CalleeKind::Defined => Callee::Defined(
                            *index.get(name).ok_or_else(|| ResolveError::UnknownFunction(name.clone()))?,
                        ),
                        CalleeKind::Intrinsic => match name.as_str() {
                            "malloc" => Callee::Malloc,
                            "free" => Callee::Free,
                            _ => {
                                let n = intrinsics::NAMES
                                    .iter()
                                    .find(|n| **n == name)
                                    .ok_or_else(|| ResolveError::UnknownIntrinsic(name.clone()))?;
                                Callee::Math(n, n.ends_with(".f32"))
                            }
                        },
                        CalleeKind::Host | CalleeKind::External => {
                            let h = registry
                                .get(name)
                                .ok_or_else(|| ResolveError::UnresolvedHostFunction(name.clone()))?;
                            if h.sig != *sig {
                                return Err(ResolveError::HostSignatureMismatch {
                                    name: name.clone(),
                                    registered: h.sig.clone(),
                                    used: sig.clone(),
                                });
                            }
                            Callee::Host(name.clone(), h.clone())
                        }
                    };
                    XOp::Call { callee, args: args.iter().map(r).collect(), sig: sig.clone() }
                }
                Op::Ret(v) => XOp::Ret(v.as_ref().map(r)),
                Op::Br(l) => XOp::Br(target(l)),
                Op::CondBr { cond, then, els } => XOp::CondBr(r(cond), target(then), target(els)),
                Op::Switch { val, cases, default } => {
                    let vt = types[val].clone();
                    let cases = cases
                        .iter()
                        .map(|(c, l)| Ok((const_value(c, &vt, globals, interner)?, target(l))))
                        .collect::<Result<_, ResolveError>>()?;
                    XOp::Switch(r(val), cases, target(default))
                }
                Op::Unreachable => XOp::Unreachable,
            };
            instrs.push(XInstr { dst: i.dst().map_or(NO_DST, |d| d.0), op });
        }
        blocks.push(XBlock { label: b.label.clone(), instrs, back: back[bi].clone() });
    }
    Ok(XFunction {
        name: f.name.clone(),
        sig: f.sig(),
        nregs: f.reg_count() as usize,
        params: f.params.iter().map(|(p, _)| p.0).collect(),
        blocks,
    })
}

struct Frame {
    func: usize,
    block: usize,
    ip: usize,
    regs: Vec<Value>,
    ret_dst: u32,
    stack_bufs: Vec<u32>,
}

pub(crate) struct Machine<'a> {
    pub prog: &'a Program,
    pub mem: &'a mut Memory,
    pub marshal: &'a mut Marshal,
    pub stats: ExecStats,
}

impl Machine<'_> {
    pub fn run(&mut self, func: usize, args: Vec<Value>) -> Result<Value, Trap> {
        let prog = self.prog;
        let mut frames: Vec<Frame> = Vec::new();
        frames.push(new_frame(&prog.funcs[func], func, args, NO_DST));
        loop {
            let depth = frames.len();
            let fr = frames.last_mut().expect("frame stack is never empty here");
            let xf = &prog.funcs[fr.func];
            let blk = &xf.blocks[fr.block];
            let ins = &blk.instrs[fr.ip];
            self.stats.instructions += 1;
            let ip = fr.ip;
            let trap = |kind: TrapKind| Trap { kind, function: xf.name.clone(), block: blk.label.clone(), instr: ip };
            let get = |regs: &Vec<Value>, x: u32| regs[x as usize];
            let v = match &ins.op {
                XOp::Const(c) => *c,
                XOp::Alloca { size, elem } => {
                    let b = self.mem.alloc(*size, Some(elem.clone()), BufKind::Stack).map_err(trap)?;
                    fr.stack_bufs.push(b);
                    self.stats.allocations += 1;
                    Value::Ptr { buf: b, off: 0 }
                }
                XOp::Load { ptr, ty } => {
                    self.stats.loads += 1;
                    self.mem.load(get(&fr.regs, *ptr), ty).map_err(trap)?
                }
                XOp::Store { val, ptr, ty } => {
                    self.stats.stores += 1;
                    self.mem.store(get(&fr.regs, *ptr), ty, get(&fr.regs, *val)).map_err(trap)?;
                    Value::Unit
                }
                XOp::Prim(op, a, b) => match eval_prim(*op, get(&fr.regs, *a), get(&fr.regs, *b)) {
                    Some(Ok(v)) => v,
                    Some(Err(ArithTrap::DivByZero)) => return Err(trap(TrapKind::DivByZero)),
                    Some(Err(ArithTrap::NuwOverflow)) => return Err(trap(TrapKind::NuwOverflow)),
                    None => return Err(trap(TrapKind::BadAccess)),
                },
                XOp::Cast(k, a, to) => eval_cast(*k, get(&fr.regs, *a), to).ok_or_else(|| trap(TrapKind::BadAccess))?,
                XOp::Gep(base, off) => match (get(&fr.regs, *base), get(&fr.regs, *off)) {
                    (Value::Ptr { buf, off }, Value::Int { bits, .. }) => Value::Ptr { buf, off: off.wrapping_add(bits) },
                    _ => return Err(trap(TrapKind::BadAccess)),
                },
                XOp::Call { callee, args, sig } => {
                    self.stats.calls += 1;
                    let vals: Vec<Value> = args.iter().map(|a| get(&fr.regs, *a)).collect();
                    match callee {
                        Callee::Defined(g) => {
                            if depth >= MAX_DEPTH {
                                return Err(trap(TrapKind::StackOverflow));
                            }
                            let dst = ins.dst;
                            fr.ip += 1;
                            let nf = new_frame(&prog.funcs[*g], *g, vals, dst);
                            frames.push(nf);
                            continue;
                        }
                        Callee::Math(name, is32) => {
                            if *is32 {
                                let x = vals[0].as_f32().ok_or_else(|| trap(TrapKind::BadAccess))?;
                                Value::f32(intrinsics::apply_math_f32(name, x).expect("math intrinsic"))
                            } else {
                                let x = vals[0].as_f64().ok_or_else(|| trap(TrapKind::BadAccess))?;
                                Value::f64(intrinsics::apply_math(name, x).expect("math intrinsic"))
                            }
                        }
                        Callee::Malloc => {
                            let n = vals[0].as_signed().ok_or_else(|| trap(TrapKind::BadAccess))?;
                            if n < 0 {
                                return Err(trap(TrapKind::AllocFailed));
                            }
                            self.stats.allocations += 1;
                            let b = self.mem.alloc(n as u64, None, BufKind::Heap).map_err(trap)?;
                            Value::Ptr { buf: b, off: 0 }
                        }
                        Callee::Free => {
                            self.mem.free(vals[0]).map_err(trap)?;
                            Value::Unit
                        }
                        Callee::Host(hname, h) => {
                            let mut hargs = Vec::with_capacity(vals.len());
                            for (v, t) in vals.iter().zip(&sig.params) {
                                hargs.push(
                                    self.marshal.from_native(self.mem, *v, t).map_err(|e| trap(TrapKind::HostError(e)))?,
                                );
                            }
                            let out = (h.f)(&hargs).map_err(|e| trap(TrapKind::HostError(format!("{hname}: {e}"))))?;
                            if *sig.ret == HType::Void {
                                Value::Unit
                            } else {
                                self.marshal
                                    .to_native(self.mem, &out, &sig.ret)
                                    .map_err(|e| trap(TrapKind::HostError(e)))?
                            }
                        }
                    }
                }
                XOp::Ret(v) => {
                    let rv = v.map_or(Value::Unit, |x| get(&fr.regs, x));
                    let done = frames.pop().expect("returning frame");
                    self.mem.release(&done.stack_bufs);
                    match frames.last_mut() {
                        None => return Ok(rv),
                        Some(caller) => {
                            if done.ret_dst != NO_DST {
                                caller.regs[done.ret_dst as usize] = rv;
                            }
                        }
                    }
                    continue;
                }
                XOp::Br(t) => {
                    self.jump(fr, blk, *t);
                    continue;
                }
                XOp::CondBr(c, t, e) => {
                    let c = get(&fr.regs, *c).truthy().ok_or_else(|| trap(TrapKind::BadAccess))?;
                    self.jump(fr, blk, if c { *t } else { *e });
                    continue;
                }
                XOp::Switch(x, cases, d) => {
                    let x = get(&fr.regs, *x);
                    let t = cases.iter().find(|(c, _)| same_case(*c, x)).map_or(*d, |(_, t)| *t);
                    self.jump(fr, blk, t);
                    continue;
                }
                XOp::Unreachable => return Err(trap(TrapKind::Unreachable)),
            };
            if ins.dst != NO_DST {
                fr.regs[ins.dst as usize] = v;
            }
            fr.ip += 1;
        }
    }

    fn jump(&mut self, fr: &mut Frame, from: &XBlock, to: usize) {
        if from.back.contains(&to) {
            self.stats.back_edges += 1;
        }
        fr.block = to;
        fr.ip = 0;
    }
}

fn same_case(c: Value, x: Value) -> bool {
    match (c, x) {
        (Value::Int { bits: a, .. }, Value::Int { bits: b, .. }) => a == b,
        _ => c == x,
    }
}

fn new_frame(f: &XFunction, func: usize, args: Vec<Value>, ret_dst: u32) -> Frame {
    let mut regs = vec![Value::Unit; f.nregs];
    for (p, a) in f.params.iter().zip(args) {
        regs[*p as usize] = a;
    }
    Frame { func, block: 0, ip: 0, regs, ret_dst, stack_bufs: Vec::new() }
}
