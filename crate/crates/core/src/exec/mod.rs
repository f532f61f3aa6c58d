//! Reference execution engine for verified LIR, with host interop.

mod host;
mod interp;
mod memory;

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use host::{to_native, DuplicateRegistration, HostCallable, HostFn, HostRegistry, HostValue, MarshalError};
pub use interp::{ExecStats, ResolveError, Trap, TrapKind, MAX_DEPTH};
pub use memory::{BufKind, Interner, Memory, MAX_ALLOC};

use crate::hir::HModule;
use crate::lir::{verify, Const, LModule, VerifyError};
use crate::lower::size_of;
use crate::ops::Value;
use crate::opt::{run_pipeline, PassConfig, PassStat, PipelineError};
use crate::types::{FnSig, HType};

use host::Marshal;
use interp::{Machine, Program};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("verification failed: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Verify(Vec<VerifyError>),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("cannot place global {name}: {msg}")]
    Global { name: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("{function} expects {expected} arguments, got {found}")]
    ArityMismatch { function: String, expected: usize, found: usize },
    #[error(transparent)]
    Marshal(#[from] MarshalError),
    #[error(transparent)]
    Trap(#[from] Trap),
    #[error("cannot read back result: {0}")]
    Unmarshal(String),
    #[error("unknown global {0}")]
    UnknownGlobal(String),
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub value: HostValue,
    pub stats: ExecStats,
    /// The arguments as seen after the call: vectors are read back from
    /// the arena, so in-place updates are visible. Derived lengths are
    /// included.
    pub args_after: Vec<HostValue>,
}

/// An immutable, executable module.
pub struct CompiledModule {
    hir: HModule,
    lir: LModule,
    program: Program,
    interner: Interner,
    globals: HashMap<String, (u32, HType)>,
    /// Globals live in this arena; invocations on a module with globals
    /// are serialized through the lock.
    shared: Mutex<Memory>,
    pass_stats: Vec<PassStat>,
    compile_time: Duration,
}

impl std::fmt::Debug for CompiledModule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompiledModule").field("name", &self.lir.name).finish_non_exhaustive()
    }
}

/// Runs the pass pipeline and prepares the result for execution.
pub fn compile_module(m: &HModule, cfg: &PassConfig, registry: &HostRegistry) -> Result<CompiledModule, CompileError> {
    let start = Instant::now();
    let out = run_pipeline(m, cfg)?;
    let mut cm = CompiledModule::from_parts(out.hir, out.lir, registry)?;
    cm.pass_stats = out.stats;
    cm.compile_time = start.elapsed();
    Ok(cm)
}

impl CompiledModule {
    /// Prepares an already-lowered module. `hir` is kept for inspection only.
    pub fn from_parts(hir: HModule, lir: LModule, registry: &HostRegistry) -> Result<CompiledModule, CompileError> {
        let start = Instant::now();
        verify(&lir).map_err(CompileError::Verify)?;
        let mut mem = Memory::default();
        let mut interner = Interner::default();
        let mut globals = HashMap::new();
        let mut bufs = HashMap::new();
        for g in &lir.globals {
            let gerr = |msg: String| CompileError::Global { name: g.name.clone(), msg };
            let (elem, len) = match &g.ty {
                HType::Array(e, Some(n)) => ((**e).clone(), *n),
                t => (t.clone(), 1),
            };
            let buf = if elem.is_scalar() {
                mem.alloc_array(&elem, len, BufKind::Static)
            } else {
                let size = size_of(&g.ty).map_err(|e| gerr(e.to_string()))?;
                mem.alloc(size, None, BufKind::Static)
            }
            .map_err(|k| gerr(k.to_string()))?;
            if !g.init.is_empty() && !elem.is_scalar() {
                return Err(gerr("only scalar globals take initializers".into()));
            }
            let step = if elem.is_scalar() { size_of(&elem).unwrap_or(0) } else { 0 };
            for (k, c) in g.init.iter().enumerate() {
                let v = match (c, &elem) {
                    (Const::Int(b), HType::Int(w)) => Value::Int { width: *w, bits: crate::ops::mask(*w, *b) },
                    (Const::Float(b), HType::F32) => Value::F32(*b as u32),
                    (Const::Float(b), HType::F64) => Value::F64(*b),
                    (Const::Sym(s), HType::Sym) => Value::Sym(interner.intern(s)),
                    (Const::Bool(b), HType::HostBool) => Value::Bool(*b),
                    _ => return Err(gerr(format!("initializer {k} does not match {elem}"))),
                };
                mem.store(Value::Ptr { buf, off: k as u64 * step }, &elem, v).map_err(|t| gerr(t.to_string()))?;
            }
            bufs.insert(g.name.clone(), buf);
            globals.insert(g.name.clone(), (buf, g.ty.clone()));
        }
        let program = Program::prepare(&lir, registry, &bufs, &mut interner)?;
        Ok(CompiledModule {
            hir,
            lir,
            program,
            interner,
            globals,
            shared: Mutex::new(mem),
            pass_stats: vec![],
            compile_time: start.elapsed(),
        })
    }

    pub fn lir(&self) -> &LModule {
        &self.lir
    }

    pub fn hir(&self) -> &HModule {
        &self.hir
    }

    pub fn pass_stats(&self) -> &[PassStat] {
        &self.pass_stats
    }

    pub fn compile_time(&self) -> Duration {
        self.compile_time
    }

    /// Whether invocations must run one at a time.
    pub fn is_serial(&self) -> bool {
        !self.globals.is_empty()
    }

    pub fn signature(&self, name: &str) -> Option<&FnSig> {
        self.program.index.get(name).map(|&i| &self.program.funcs[i].sig)
    }

    /// Symbol text for an intern id assigned at compile time.
    pub fn symbol_name(&self, id: u32) -> Option<&str> {
        self.interner.name(id)
    }

    /// Calls a function with host arguments. A pointer parameter followed
    /// by an i64 parameter forms an (array, length) pair; when the caller
    /// omits every such length, it is derived from the vector argument.
    pub fn apply(&self, name: &str, args: &[HostValue]) -> Result<Outcome, ExecError> {
        let &fi = self.program.index.get(name).ok_or_else(|| ExecError::UnknownFunction(name.to_string()))?;
        let sig = &self.program.funcs[fi].sig;
        let args = expand_lengths(name, sig, args)?;
        if self.is_serial() {
            let mut mem = self.shared.lock().unwrap_or_else(|p| p.into_inner());
            let keep = mem.buffers.len();
            let r = self.invoke(fi, &args, &mut mem);
            mem.buffers.truncate(keep);
            r
        } else {
            self.invoke(fi, &args, &mut Memory::default())
        }
    }

    fn invoke(&self, fi: usize, args: &[HostValue], mem: &mut Memory) -> Result<Outcome, ExecError> {
        let sig = &self.program.funcs[fi].sig;
        let mut marshal = Marshal { interner: self.interner.clone(), handles: vec![] };
        let mut vals = Vec::with_capacity(args.len());
        for (index, (a, t)) in args.iter().zip(&sig.params).enumerate() {
            vals.push(marshal.to_native(mem, a, t).map_err(|msg| MarshalError { index, msg })?);
        }
        let mut m = Machine { prog: &self.program, mem, marshal: &mut marshal, stats: ExecStats::default() };
        let rv = m.run(fi, vals.clone())?;
        let stats = m.stats;
        let value = marshal.from_native(mem, rv, &sig.ret).map_err(ExecError::Unmarshal)?;
        let mut args_after = Vec::with_capacity(args.len());
        for ((a, v), t) in args.iter().zip(&vals).zip(&sig.params) {
            args_after.push(match a {
                HostValue::Vector(_) => marshal.from_native(mem, *v, t).map_err(ExecError::Unmarshal)?,
                other => other.clone(),
            });
        }
        Ok(Outcome { value, stats, args_after })
    }

    /// Current contents of a global buffer.
    pub fn read_global(&self, name: &str) -> Result<HostValue, ExecError> {
        let (buf, ty) = self.globals.get(name).ok_or_else(|| ExecError::UnknownGlobal(name.to_string()))?;
        let elem = match ty {
            HType::Array(e, _) => (**e).clone(),
            t => t.clone(),
        };
        let mem = self.shared.lock().unwrap_or_else(|p| p.into_inner());
        let marshal = Marshal { interner: self.interner.clone(), handles: vec![] };
        marshal.from_native(&mem, Value::Ptr { buf: *buf, off: 0 }, &HType::ptr(elem)).map_err(ExecError::Unmarshal)
    }

    /// Overwrites a global buffer element by element.
    pub fn write_global(&self, name: &str, items: &[HostValue]) -> Result<(), ExecError> {
        let (buf, ty) = self.globals.get(name).ok_or_else(|| ExecError::UnknownGlobal(name.to_string()))?;
        let elem = match ty {
            HType::Array(e, _) => (**e).clone(),
            t => t.clone(),
        };
        let step = size_of(&elem).map_err(|e| ExecError::Unmarshal(e.to_string()))?;
        let mut mem = self.shared.lock().unwrap_or_else(|p| p.into_inner());
        let mut marshal = Marshal { interner: self.interner.clone(), handles: vec![] };
        for (k, item) in items.iter().enumerate() {
            let v = marshal.to_native(&mut mem, item, &elem).map_err(|msg| MarshalError { index: k, msg })?;
            let p = Value::Ptr { buf: *buf, off: k as u64 * step };
            mem.store(p, &elem, v).map_err(|kind| {
                ExecError::Trap(Trap { kind, function: String::new(), block: String::new(), instr: k })
            })?;
        }
        Ok(())
    }
}

/// Positions of (pointer, i64) parameter pairs, scanning left to right.
pub fn length_pairs(sig: &FnSig) -> Vec<usize> {
    let mut out = vec![];
    let mut i = 0;
    while i + 1 < sig.params.len() {
        if matches!(sig.params[i], HType::Ptr(_)) && sig.params[i + 1] == HType::i64() {
            out.push(i);
            i += 2;
        } else {
            i += 1;
        }
    }
    out
}

fn expand_lengths(name: &str, sig: &FnSig, args: &[HostValue]) -> Result<Vec<HostValue>, ExecError> {
    let n = sig.params.len();
    if args.len() == n {
        return Ok(args.to_vec());
    }
    let pairs = length_pairs(sig);
    if pairs.is_empty() || args.len() + pairs.len() != n {
        return Err(ExecError::ArityMismatch { function: name.to_string(), expected: n, found: args.len() });
    }
    let mut out = Vec::with_capacity(n);
    let mut it = args.iter();
    let mut i = 0;
    while i < n {
        let a = it.next().expect("argument count checked");
        out.push(a.clone());
        if pairs.contains(&i) {
            let len = match a {
                HostValue::Vector(v) => v.len() as i64,
                _ => {
                    return Err(ExecError::Marshal(MarshalError {
                        index: out.len() - 1,
                        msg: "length can only be derived from a vector".into(),
                    }))
                }
            };
            out.push(HostValue::Int(len));
            i += 1;
        }
        i += 1;
    }
    Ok(out)
}
