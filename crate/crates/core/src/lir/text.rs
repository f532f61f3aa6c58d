//! S-expression text form of the low IR. `parse_module(&dump_module(m))`
//! reproduces `m` exactly.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use super::ir::*;
use crate::ops::{mask, sign_extend, CastKind, PrimOp};
use crate::sexp::{self, format_float, ParseError, Sexp};
use crate::types::{FnSig, HType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LirParseError {
    #[error("syntax error at {0}")]
    Syntax(#[from] ParseError),
    #[error("in {context}: {msg}")]
    Malformed { context: String, msg: String },
}

fn s(x: &str) -> Sexp {
    Sexp::sym(x)
}

fn reg(r: Reg) -> Sexp {
    Sexp::Symbol(r.to_string())
}

fn const_to_sexp(c: &Const, ty: &HType) -> Sexp {
    match c {
        Const::Int(bits) => {
            let w = match ty {
                HType::Int(w) => *w,
                _ => 64,
            };
            Sexp::Int(sign_extend(w, *bits) as i128)
        }
        Const::Float(bits) => {
            let v = if *ty == HType::F32 { f32::from_bits(*bits as u32) as f64 } else { f64::from_bits(*bits) };
            if v.is_nan() {
                Sexp::list([s("nan"), Sexp::Int(*bits as i128)])
            } else {
                Sexp::sym(format_float(v))
            }
        }
        Const::Sym(t) => Sexp::list([s("sym"), s(t)]),
        Const::Bool(b) => Sexp::Bool(*b),
        Const::Global(n) => Sexp::list([s("global"), s(n)]),
    }
}

fn op_to_sexp(op: &Op, types: &HashMap<Reg, HType>) -> Sexp {
    let mut v = vec![s(op.opcode())];
    match op {
        Op::Alloca(t) => v.push(t.to_sexp()),
        Op::Load(r) => v.push(reg(*r)),
        Op::Store { val, ptr } => v.extend([reg(*val), reg(*ptr)]),
        Op::Bin(_, a, b) | Op::Cmp(_, a, b) => v.extend([reg(*a), reg(*b)]),
        Op::Cast(k, a) => v.extend([s(k.name()), reg(*a)]),
        Op::GepOffset { base, offset } => v.extend([reg(*base), reg(*offset)]),
        Op::Call { kind, name, sig, args } => {
            v.extend([s(kind.name()), s(name), sig.to_sexp()]);
            v.extend(args.iter().map(|r| reg(*r)));
        }
        Op::Const(_) => unreachable!("constants are printed with their type"),
        Op::Ret(r) => v.extend(r.map(reg)),
        Op::Br(l) => v.push(s(l)),
        Op::CondBr { cond, then, els } => v.extend([reg(*cond), s(then), s(els)]),
        Op::Switch { val, cases, default } => {
            let ty = types.get(val).cloned().unwrap_or(HType::i64());
            v.push(reg(*val));
            v.push(Sexp::List(cases.iter().map(|(c, l)| Sexp::list([const_to_sexp(c, &ty), s(l)])).collect()));
            v.push(s(default));
        }
        Op::Unreachable => {}
    }
    Sexp::List(v)
}

fn instr_to_sexp(i: &Instr, types: &HashMap<Reg, HType>) -> Sexp {
    let op = match (&i.op, &i.result) {
        (Op::Const(c), Some((_, t))) => Sexp::list([s("const"), const_to_sexp(c, t)]),
        (op, _) => op_to_sexp(op, types),
    };
    match &i.result {
        Some((r, t)) => Sexp::list([reg(*r), t.to_sexp(), op]),
        None => op,
    }
}

pub fn reg_types(f: &LFunction) -> HashMap<Reg, HType> {
    let mut m: HashMap<Reg, HType> = f.params.iter().cloned().collect();
    for b in &f.blocks {
        for i in &b.instrs {
            if let Some((r, t)) = &i.result {
                m.insert(*r, t.clone());
            }
        }
    }
    m
}

pub fn function_to_sexp(f: &LFunction) -> Sexp {
    let types = reg_types(f);
    let mut v = vec![
        s("fn"),
        s(&f.name),
        Sexp::List(f.params.iter().map(|(r, t)| Sexp::list([reg(*r), t.to_sexp()])).collect()),
        f.ret.to_sexp(),
    ];
    if !f.attrs.is_empty() {
        let mut a = vec![s("attrs")];
        a.extend(f.attrs.iter().map(|x| s(x)));
        v.push(Sexp::List(a));
    }
    for b in &f.blocks {
        let mut bv = vec![s("block"), s(&b.label)];
        bv.extend(b.instrs.iter().map(|i| instr_to_sexp(i, &types)));
        v.push(Sexp::List(bv));
    }
    Sexp::List(v)
}

pub fn module_to_sexp(m: &LModule) -> Sexp {
    let mut v = vec![s("module"), s(&m.name)];
    for g in &m.globals {
        let elem = match &g.ty {
            HType::Array(e, _) => (**e).clone(),
            t => t.clone(),
        };
        let mut gv = vec![s("global"), s(&g.name), g.ty.to_sexp()];
        gv.extend(g.init.iter().map(|c| const_to_sexp(c, &elem)));
        v.push(Sexp::List(gv));
    }
    v.extend(m.functions.iter().map(function_to_sexp));
    Sexp::List(v)
}

/// Deterministic multi-line text of a module.
pub fn dump_module(m: &LModule) -> String {
    let mut out = module_to_sexp(m).pretty(100);
    out.push('\n');
    out
}

impl std::fmt::Display for LModule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&dump_module(self))
    }
}

struct P {
    context: String,
}

impl P {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, LirParseError> {
        Err(LirParseError::Malformed { context: self.context.clone(), msg: msg.into() })
    }

    fn sym<'a>(&self, d: Option<&'a Sexp>, what: &str) -> Result<&'a str, LirParseError> {
        match d.and_then(Sexp::as_symbol) {
            Some(x) => Ok(x),
            None => self.err(format!("expected {what}")),
        }
    }

    fn reg(&self, d: Option<&Sexp>) -> Result<Reg, LirParseError> {
        let text = self.sym(d, "a register")?;
        match text.strip_prefix('%').and_then(|n| n.parse().ok()) {
            Some(n) => Ok(Reg(n)),
            None => self.err(format!("`{text}` is not a register")),
        }
    }

    fn ty(&self, d: Option<&Sexp>) -> Result<HType, LirParseError> {
        match d.map(HType::from_sexp) {
            Some(Ok(t)) => Ok(t),
            Some(Err(m)) => self.err(m),
            None => self.err("expected a type"),
        }
    }

    fn konst(&self, d: Option<&Sexp>, ty: &HType) -> Result<Const, LirParseError> {
        let Some(d) = d else { return self.err("expected a constant") };
        Ok(match d {
            Sexp::Int(v) if ty.is_int() => {
                let w = if let HType::Int(w) = ty { *w } else { 64 };
                Const::Int(mask(w, *v as u64))
            }
            Sexp::Float(v) if ty.is_float() => {
                if *ty == HType::F32 {
                    Const::Float((*v as f32).to_bits() as u64)
                } else {
                    Const::Float(v.to_bits())
                }
            }
            Sexp::Int(v) if ty.is_float() => {
                let v = *v as f64;
                Const::Float(if *ty == HType::F32 { (v as f32).to_bits() as u64 } else { v.to_bits() })
            }
            Sexp::Bool(b) => Const::Bool(*b),
            Sexp::List(items) => match (d.head(), items.len()) {
                (Some("sym"), 2) => Const::Sym(self.sym(items.get(1), "a symbol")?.to_string()),
                (Some("global"), 2) => Const::Global(self.sym(items.get(1), "a global name")?.to_string()),
                (Some("nan"), 2) => match items[1].as_int() {
                    Some(bits) => Const::Float(bits as u64),
                    None => return self.err("malformed nan constant"),
                },
                _ => return self.err(format!("malformed constant {d}")),
            },
            _ => return self.err(format!("constant {d} does not fit type {ty}")),
        })
    }

    fn op(&self, d: &Sexp, result_ty: Option<&HType>, types: &HashMap<Reg, HType>) -> Result<Op, LirParseError> {
        let Some(items) = d.as_list() else { return self.err(format!("expected an operation, found {d}")) };
        let head = self.sym(items.first(), "an opcode")?;
        let arg = |i: usize| items.get(i);
        let want = |n: usize| -> Result<(), LirParseError> {
            if items.len() == n {
                Ok(())
            } else {
                self.err(format!("`{head}` expects {} operands", n - 1))
            }
        };
        if let Some(p) = PrimOp::from_name(head) {
            want(3)?;
            let (a, b) = (self.reg(arg(1))?, self.reg(arg(2))?);
            return Ok(if p.is_compare() { Op::Cmp(p, a, b) } else { Op::Bin(p, a, b) });
        }
        Ok(match head {
            "alloca" => {
                want(2)?;
                Op::Alloca(self.ty(arg(1))?)
            }
            "load" => {
                want(2)?;
                Op::Load(self.reg(arg(1))?)
            }
            "store" => {
                want(3)?;
                Op::Store { val: self.reg(arg(1))?, ptr: self.reg(arg(2))? }
            }
            "cast" => {
                want(3)?;
                let k = self.sym(arg(1), "a cast kind")?;
                let Some(kind) = CastKind::from_name(k) else { return self.err(format!("unknown cast `{k}`")) };
                Op::Cast(kind, self.reg(arg(2))?)
            }
            "gep-offset" => {
                want(3)?;
                Op::GepOffset { base: self.reg(arg(1))?, offset: self.reg(arg(2))? }
            }
            "call" => {
                if items.len() < 4 {
                    return self.err("`call` expects a callee kind, a name and a signature");
                }
                let k = self.sym(arg(1), "a callee kind")?;
                let Some(kind) = CalleeKind::from_name(k) else {
                    return self.err(format!("unknown callee kind `{k}`"));
                };
                let name = self.sym(arg(2), "a callee name")?.to_string();
                let sig = match FnSig::from_sexp(&items[3]) {
                    Ok(sig) => sig,
                    Err(m) => return self.err(m),
                };
                let args = items[4..].iter().map(|a| self.reg(Some(a))).collect::<Result<_, _>>()?;
                Op::Call { kind, name, sig, args }
            }
            "const" => {
                want(2)?;
                let Some(t) = result_ty else { return self.err("`const` needs a result register") };
                Op::Const(self.konst(arg(1), t)?)
            }
            "ret" => match items.len() {
                1 => Op::Ret(None),
                2 => Op::Ret(Some(self.reg(arg(1))?)),
                _ => return self.err("`ret` takes at most one operand"),
            },
            "br" => {
                want(2)?;
                Op::Br(self.sym(arg(1), "a label")?.to_string())
            }
            "condbr" => {
                want(4)?;
                Op::CondBr {
                    cond: self.reg(arg(1))?,
                    then: self.sym(arg(2), "a label")?.to_string(),
                    els: self.sym(arg(3), "a label")?.to_string(),
                }
            }
            "switch" => {
                want(4)?;
                let val = self.reg(arg(1))?;
                let ty = types.get(&val).cloned().unwrap_or(HType::i64());
                let Some(cases) = items[2].as_list() else { return self.err("malformed switch cases") };
                let cases = cases
                    .iter()
                    .map(|c| match c.as_list() {
                        Some([k, l]) => Ok((self.konst(Some(k), &ty)?, self.sym(Some(l), "a label")?.to_string())),
                        _ => self.err("malformed switch case"),
                    })
                    .collect::<Result<_, _>>()?;
                Op::Switch { val, cases, default: self.sym(arg(3), "a label")?.to_string() }
            }
            "unreachable" => {
                want(1)?;
                Op::Unreachable
            }
            _ => return self.err(format!("unknown opcode `{head}`")),
        })
    }
}

/// Pre-scan of result registers so switch constants can be typed.
fn scan_types(blocks: &[Sexp], params: &[(Reg, HType)]) -> HashMap<Reg, HType> {
    let mut m: HashMap<Reg, HType> = params.iter().cloned().collect();
    for b in blocks {
        for i in b.as_list().unwrap_or(&[]).iter().skip(2) {
            if let Some([Sexp::Symbol(r), t, Sexp::List(_)]) = i.as_list() {
                if let (Some(n), Ok(t)) = (r.strip_prefix('%').and_then(|n| n.parse().ok()), HType::from_sexp(t)) {
                    m.insert(Reg(n), t);
                }
            }
        }
    }
    m
}

fn parse_function(d: &Sexp) -> Result<LFunction, LirParseError> {
    let mut p = P { context: "function".into() };
    let Some(items) = d.as_list().filter(|_| d.head() == Some("fn")) else {
        return p.err(format!("expected (fn ...), found {}", truncate(d)));
    };
    let name = p.sym(items.get(1), "a function name")?.to_string();
    p.context = format!("fn {name}");
    let Some(params) = items.get(2).and_then(Sexp::as_list) else { return p.err("expected a parameter list") };
    let params = params
        .iter()
        .map(|x| match x.as_list() {
            Some([r, t]) => Ok((p.reg(Some(r))?, p.ty(Some(t))?)),
            _ => p.err("malformed parameter"),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ret = p.ty(items.get(3))?;
    let mut rest = &items[4.min(items.len())..];
    let mut attrs = BTreeSet::new();
    if let Some(first) = rest.first() {
        if first.head() == Some("attrs") {
            for a in &first.as_list().unwrap()[1..] {
                attrs.insert(p.sym(Some(a), "an attribute")?.to_string());
            }
            rest = &rest[1..];
        }
    }
    let types = scan_types(rest, &params);
    let mut blocks = Vec::new();
    for b in rest {
        let Some(bitems) = b.as_list().filter(|_| b.head() == Some("block")) else {
            return p.err(format!("expected (block ...), found {}", truncate(b)));
        };
        let label = p.sym(bitems.get(1), "a block label")?.to_string();
        let mut instrs = Vec::new();
        for (k, i) in bitems.iter().enumerate().skip(2) {
            let ip = P { context: format!("fn {name}, block {label}, instr {}", k - 2) };
            let instr = match i.as_list() {
                Some([Sexp::Symbol(r), t, op]) if r.starts_with('%') => {
                    let r = ip.reg(Some(&Sexp::Symbol(r.clone())))?;
                    let t = ip.ty(Some(t))?;
                    let op = ip.op(op, Some(&t), &types)?;
                    Instr::new(Some((r, t)), op)
                }
                _ => Instr::new(None, ip.op(i, None, &types)?),
            };
            instrs.push(instr);
        }
        blocks.push(Block { label, instrs });
    }
    Ok(LFunction { name, params, ret, attrs, blocks })
}

fn truncate(d: &Sexp) -> String {
    let t = d.to_string();
    if t.len() > 60 {
        format!("{}...", &t[..t.char_indices().nth(57).map(|(i, _)| i).unwrap_or(t.len())])
    } else {
        t
    }
}

pub fn parse_module(text: &str) -> Result<LModule, LirParseError> {
    let d = sexp::parse(text)?;
    let p = P { context: "module".into() };
    let Some(items) = d.as_list().filter(|_| d.head() == Some("module")) else {
        return p.err("expected (module <name> ...)");
    };
    let name = p.sym(items.get(1), "a module name")?.to_string();
    let mut m = LModule { name, ..Default::default() };
    for item in &items[2..] {
        match item.head() {
            Some("global") => {
                let g = item.as_list().unwrap();
                let gname = p.sym(g.get(1), "a global name")?.to_string();
                let ty = p.ty(g.get(2))?;
                let elem = match &ty {
                    HType::Array(e, _) => (**e).clone(),
                    t => t.clone(),
                };
                let init = g[3.min(g.len())..].iter().map(|c| p.konst(Some(c), &elem)).collect::<Result<_, _>>()?;
                m.globals.push(LGlobal { name: gname, ty, init });
            }
            Some("fn") => m.functions.push(parse_function(item)?),
            _ => return p.err(format!("unexpected module item {}", truncate(item))),
        }
    }
    Ok(m)
}

pub fn parse_function_text(text: &str) -> Result<LFunction, LirParseError> {
    parse_function(&sexp::parse(text)?)
}
