//! Lowering to HIR.
//!
//! Every temporary is a single `Let` binding wrapped around the rest of its
//! block, so only loop counters and accumulators are ever assigned. A
//! `summate` outside a fused group becomes a call to a `pure` helper
//! function, which is what lets HIR LICM hoist invariant reductions.

use std::collections::{BTreeMap, BTreeSet};

use dslkit::astdef::{to_sexp, Node};
use dslkit::hir::build::*;
use dslkit::hir::{Binding, Expr, HFunction, HModule, Stmt};
use dslkit::ops::CastKind;
use dslkit::HType;

use super::{free_vars, op_of, sym_of, type_of, MType, MhkError, MhkProgram};

/// Name of the entry function.
pub const MAIN: &str = "main";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowerOptions {
    /// Merge sibling loops over the same bounds into one loop.
    pub fuse: bool,
}

impl Default for LowerOptions {
    fn default() -> Self {
        LowerOptions { fuse: true }
    }
}

#[derive(Debug, Clone)]
enum Val {
    /// A side-effect-free expression over atoms.
    Scalar(Expr, MType),
    /// Pointer and length are atoms.
    Array { ptr: Expr, len: Expr, elem: MType },
}

type Env = BTreeMap<String, Val>;

struct Cx {
    fuse: bool,
    helpers: Vec<HFunction>,
    next: usize,
}

impl Cx {
    fn fresh(&mut self, base: &str) -> String {
        self.next += 1;
        format!("${base}{}", self.next - 1)
    }
}

enum Item {
    Stmt(Stmt),
    Bind(Binding),
}

/// Statements of one block; each binding scopes over the items after it.
#[derive(Default)]
struct Fb {
    items: Vec<Item>,
}

impl Fb {
    fn bind(&mut self, cx: &mut Cx, base: &str, init: Expr, ty: HType) -> Expr {
        let name = cx.fresh(base);
        self.items.push(Item::Bind(binding(name.clone(), init, ty)));
        var(name)
    }

    fn push(&mut self, s: Stmt) {
        self.items.push(Item::Stmt(s));
    }

    fn finish(self) -> Stmt {
        let mut acc: Vec<Stmt> = vec![];
        for it in self.items.into_iter().rev() {
            match it {
                Item::Stmt(s) => acc.push(s),
                Item::Bind(b) => {
                    acc.reverse();
                    acc = vec![expr_stmt(let_(vec![b], block(acc), i1(false)))];
                }
            }
        }
        acc.reverse();
        block(acc)
    }
}

fn scalar_hir(t: &MType) -> HType {
    if t.is_real() {
        HType::F64
    } else {
        HType::i64()
    }
}

fn zero(t: &MType) -> Expr {
    if t.is_real() {
        fl64(0.0)
    } else {
        si64(0)
    }
}

fn unsupported(what: impl Into<String>) -> MhkError {
    MhkError::UnsupportedConstruct(what.into())
}

fn child<'a>(n: &'a Node, f: &str) -> Result<&'a Node, MhkError> {
    n.node(f).ok_or_else(|| MhkError::Syntax(format!("{} without {f}", n.production())))
}

/// Lowers a closed, A-normalized program to a module whose `main` takes
/// the program's inputs, each array as a (pointer, length) pair.
pub fn lower_program(prog: &MhkProgram, opts: &LowerOptions) -> Result<HModule, MhkError> {
    let mut cx = Cx { fuse: opts.fuse, helpers: vec![], next: 0 };
    let mut env = Env::new();
    let mut params: Vec<(String, HType)> = vec![];
    for (name, t) in &prog.params {
        match t {
            MType::Array(elem) if elem.is_scalar() => {
                let len = format!("$len.{name}");
                params.push((name.clone(), HType::ptr(scalar_hir(elem))));
                params.push((len.clone(), HType::i64()));
                env.insert(name.clone(), Val::Array { ptr: var(name.clone()), len: var(len), elem: (**elem).clone() });
            }
            t if t.is_scalar() => {
                params.push((name.clone(), scalar_hir(t)));
                env.insert(name.clone(), Val::Scalar(var(name.clone()), t.clone()));
            }
            other => return Err(unsupported(format!("parameter of type {}", other.to_sexp()))),
        }
    }
    let mut fb = Fb::default();
    let v = lower(&mut cx, &mut fb, &env, &prog.body)?;
    let ret_ty = match &v {
        Val::Scalar(e, t) => {
            fb.push(ret(e.clone()));
            scalar_hir(t)
        }
        Val::Array { ptr, elem, .. } => {
            fb.push(ret(ptr.clone()));
            HType::ptr(scalar_hir(elem))
        }
    };
    let main = make_function(MAIN, &params, ret_ty, fb.finish(), &[])?;
    let mut m = HModule::new("mhk");
    m.add(main).map_err(|e| MhkError::Type(e.to_string()))?;
    for h in cx.helpers {
        m.add(h).map_err(|e| MhkError::Type(e.to_string()))?;
    }
    Ok(m)
}

fn make_function(name: &str, params: &[(String, HType)], ret: HType, body: Stmt, attrs: &[&str]) -> Result<HFunction, MhkError> {
    let ps = params.iter().map(|(n, t)| (n.as_str(), t.clone())).collect();
    function(name, ps, ret, body, attrs).map_err(|e| MhkError::Type(e.to_string()))
}

fn lower_scalar(cx: &mut Cx, fb: &mut Fb, env: &Env, e: &Node) -> Result<(Expr, MType), MhkError> {
    match lower(cx, fb, env, e)? {
        Val::Scalar(x, t) => Ok((x, t)),
        Val::Array { .. } => Err(MhkError::Type(format!("expected a scalar, got an array from {}", e.production()))),
    }
}

/// A scalar as an atom, binding it first if needed.
fn atom(cx: &mut Cx, fb: &mut Fb, x: Expr, t: &MType) -> Expr {
    if x.is_atomic() {
        x
    } else {
        fb.bind(cx, "v", x, scalar_hir(t))
    }
}

fn lower(cx: &mut Cx, fb: &mut Fb, env: &Env, e: &Node) -> Result<Val, MhkError> {
    match e.production() {
        "val" => {
            let t = type_of(e)?;
            let v = e.leaf("v").ok_or_else(|| MhkError::Syntax("val without value".into()))?;
            if !t.is_scalar() {
                return Err(unsupported(format!("literal of type {}", t.to_sexp())));
            }
            let x = if t.is_real() {
                fl64(v.as_f64().ok_or_else(|| MhkError::Type(format!("{v} is not a number")))?)
            } else {
                let k = v.as_int().and_then(|k| i64::try_from(k).ok());
                si64(k.ok_or_else(|| MhkError::Type(format!("{v} is not a 64-bit integer")))?)
            };
            Ok(Val::Scalar(x, t))
        }
        "var" => {
            let name = sym_of(e, "sym")?;
            env.get(&name).cloned().ok_or_else(|| MhkError::Type(format!("unbound variable {name}")))
        }
        "app" => {
            let op = op_of(e).ok_or_else(|| unsupported("application of something other than an operator"))?;
            lower_op(cx, fb, env, op, &type_of(e)?, &e.nodes("rands"))
        }
        "if" => {
            let t = type_of(e)?;
            if !t.is_scalar() {
                return Err(unsupported("if producing an array"));
            }
            let (c, ct) = lower_scalar(cx, fb, env, child(e, "tst")?)?;
            let cond = if ct.is_real() { fcmp_one(c, fl64(0.0)) } else { icmp_ne(c, si64(0)) };
            let tmp = fb.bind(cx, "if", zero(&t), scalar_hir(&t));
            let mut arms = vec![];
            for f in ["thn", "els"] {
                let mut sub = Fb::default();
                let (v, _) = lower_scalar(cx, &mut sub, env, child(e, f)?)?;
                sub.push(set(tmp.as_var().expect("bound name"), v));
                arms.push(sub.finish());
            }
            let els = arms.pop().expect("two arms");
            let thn = arms.pop().expect("two arms");
            fb.push(if_(cond, thn, els));
            Ok(Val::Scalar(tmp, t))
        }
        "match" => {
            if cx.fuse {
                if let Some((group, rest)) = fusable_chain(e)? {
                    return lower_fused(cx, fb, env, &group, rest);
                }
            }
            let branches = e.nodes("branches");
            let first = branches.first().ok_or_else(|| MhkError::Syntax("match without branches".into()))?;
            let p = child(first, "p")?;
            if p.production() != "pvar" {
                return Err(unsupported("pair patterns"));
            }
            let v = match lower(cx, fb, env, child(e, "tst")?)? {
                Val::Scalar(x, t) => Val::Scalar(atom(cx, fb, x, &t), t),
                arr => arr,
            };
            let mut inner = env.clone();
            inner.insert(sym_of(p, "sym")?, v);
            lower(cx, fb, &inner, child(first, "body")?)
        }
        "for" => {
            let lp = Loop::new(e)?;
            let (lo, hi) = bounds(cx, fb, env, e)?;
            let n = length(cx, fb, &lo, &hi);
            let out = lp.start(cx, fb, &n)?;
            let i = fb.bind(cx, "i", lo.clone(), HType::i64());
            let mut sub = Fb::default();
            lp.step(cx, &mut sub, env, &i, &lo, &out)?;
            sub.push(set(i.as_var().expect("bound name"), add(i.clone(), si64(1))));
            fb.push(while_(icmp_slt(i, hi), sub.finish()));
            Ok(lp.result(out, n))
        }
        "summate" => summate_call(cx, env, e),
        "bucket" => Err(unsupported("bucket")),
        other => Err(unsupported(format!("`{other}` in expression position"))),
    }
}

fn bounds(cx: &mut Cx, fb: &mut Fb, env: &Env, e: &Node) -> Result<(Expr, Expr), MhkError> {
    let (lo, lt) = lower_scalar(cx, fb, env, child(e, "lo")?)?;
    let lo = atom(cx, fb, lo, &lt);
    let (hi, ht) = lower_scalar(cx, fb, env, child(e, "hi")?)?;
    let hi = atom(cx, fb, hi, &ht);
    Ok((lo, hi))
}

/// `max(hi - lo, 0)`, bound to a fresh name.
fn length(cx: &mut Cx, fb: &mut Fb, lo: &Expr, hi: &Expr) -> Expr {
    let n = fb.bind(cx, "n", sub(hi.clone(), lo.clone()), HType::i64());
    fb.push(if_(icmp_slt(n.clone(), si64(0)), set(n.as_var().expect("bound name"), si64(0)), svoid()));
    n
}

fn alloc(cx: &mut Cx, fb: &mut Fb, n: Expr, elem: &MType) -> Expr {
    let ty = HType::ptr(scalar_hir(elem));
    let raw = intrinsic("malloc", vec![mul(n, si64(8))]);
    fb.bind(cx, "arr", cast(CastKind::PtrCast, raw, ty.clone()), ty)
}

/// One `for` or `summate` taking part in a loop nest.
struct Loop<'a> {
    node: &'a Node,
    index: String,
    ty: MType,
    is_for: bool,
}

impl<'a> Loop<'a> {
    fn new(node: &'a Node) -> Result<Loop<'a>, MhkError> {
        let ty = type_of(node)?;
        let is_for = node.production() == "for";
        if is_for && !matches!(&ty, MType::Array(e) if e.is_scalar()) {
            return Err(unsupported(format!("for producing {}", ty.to_sexp())));
        }
        if !is_for && !ty.is_scalar() {
            return Err(unsupported(format!("summate producing {}", ty.to_sexp())));
        }
        Ok(Loop { node, index: sym_of(node, "index")?, ty, is_for })
    }

    fn elem(&self) -> MType {
        match &self.ty {
            MType::Array(e) => (**e).clone(),
            t => t.clone(),
        }
    }

    /// Allocates the output array or the accumulator.
    fn start(&self, cx: &mut Cx, fb: &mut Fb, n: &Expr) -> Result<Expr, MhkError> {
        Ok(if self.is_for {
            alloc(cx, fb, n.clone(), &self.elem())
        } else {
            fb.bind(cx, "acc", zero(&self.ty), scalar_hir(&self.ty))
        })
    }

    /// One iteration's work with the index bound to `i`.
    fn step(&self, cx: &mut Cx, fb: &mut Fb, env: &Env, i: &Expr, lo: &Expr, out: &Expr) -> Result<(), MhkError> {
        let mut inner = env.clone();
        inner.insert(self.index.clone(), Val::Scalar(i.clone(), MType::Nat));
        let (v, _) = lower_scalar(cx, fb, &inner, child(self.node, "body")?)?;
        if self.is_for {
            fb.push(store(v, gep(out.clone(), vec![sub(i.clone(), lo.clone())])));
        } else {
            let next = if self.ty.is_real() { fadd(out.clone(), v) } else { add(out.clone(), v) };
            fb.push(set(out.as_var().expect("bound name"), next));
        }
        Ok(())
    }

    fn result(&self, out: Expr, n: Expr) -> Val {
        if self.is_for {
            Val::Array { ptr: out, len: n, elem: self.elem() }
        } else {
            Val::Scalar(out, self.ty.clone())
        }
    }
}

/// A `summate` as a call to a fresh pure helper taking its free variables.
fn summate_call(cx: &mut Cx, env: &Env, e: &Node) -> Result<Val, MhkError> {
    let lp = Loop::new(e)?;
    let mut params: Vec<(String, HType)> = vec![];
    let mut args = vec![];
    let mut henv = Env::new();
    for name in free_vars(e) {
        let v = env.get(&name).ok_or_else(|| MhkError::Type(format!("unbound variable {name}")))?;
        match v {
            Val::Scalar(x, t) => {
                let p = cx.fresh("p");
                params.push((p.clone(), scalar_hir(t)));
                args.push(x.clone());
                henv.insert(name, Val::Scalar(var(p), t.clone()));
            }
            Val::Array { ptr, len, elem } => {
                let (pp, pl) = (cx.fresh("p"), cx.fresh("p"));
                params.push((pp.clone(), HType::ptr(scalar_hir(elem))));
                params.push((pl.clone(), HType::i64()));
                args.extend([ptr.clone(), len.clone()]);
                henv.insert(name, Val::Array { ptr: var(pp), len: var(pl), elem: elem.clone() });
            }
        }
    }
    let mut hb = Fb::default();
    let (lo, hi) = bounds(cx, &mut hb, &henv, e)?;
    let acc = lp.start(cx, &mut hb, &si64(0))?;
    let i = hb.bind(cx, "i", lo.clone(), HType::i64());
    let mut sub = Fb::default();
    lp.step(cx, &mut sub, &henv, &i, &lo, &acc)?;
    sub.push(set(i.as_var().expect("bound name"), add(i.clone(), si64(1))));
    hb.push(while_(icmp_slt(i, hi), sub.finish()));
    hb.push(ret(acc));
    let name = format!("summate{}", cx.helpers.len());
    let f = make_function(&name, &params, scalar_hir(&lp.ty), hb.finish(), &["pure"])?;
    cx.helpers.push(f);
    Ok(Val::Scalar(app(name, args), lp.ty))
}

/// Bindings of a fusable chain, then the body after the last one.
type Chain = (Vec<(String, Node)>, Node);

/// Consecutive single-binding matches whose scrutinees are loops over the
/// same bounds, none depending on an earlier binding of the chain.
fn fusable_chain(m: &Node) -> Result<Option<Chain>, MhkError> {
    let mut group: Vec<(String, Node)> = vec![];
    let mut bound: BTreeSet<String> = BTreeSet::new();
    let mut key = None;
    let mut cur = m.clone();
    loop {
        if cur.production() != "match" {
            break;
        }
        let branches = cur.nodes("branches");
        let [b] = branches.as_slice() else { break };
        let p = child(b, "p")?;
        let tst = child(&cur, "tst")?;
        if p.production() != "pvar" || !matches!(tst.production(), "for" | "summate") {
            break;
        }
        let k = (to_sexp(child(tst, "lo")?), to_sexp(child(tst, "hi")?));
        if key.as_ref().is_some_and(|k0| *k0 != k) || !free_vars(tst).is_disjoint(&bound) {
            break;
        }
        key = Some(k);
        let name = sym_of(p, "sym")?;
        bound.insert(name.clone());
        group.push((name, tst.clone()));
        cur = child(b, "body")?.clone();
    }
    Ok(if group.len() >= 2 { Some((group, cur)) } else { None })
}

fn lower_fused(cx: &mut Cx, fb: &mut Fb, env: &Env, group: &[(String, Node)], rest: Node) -> Result<Val, MhkError> {
    let loops = group.iter().map(|(_, n)| Loop::new(n)).collect::<Result<Vec<_>, _>>()?;
    let (lo, hi) = bounds(cx, fb, env, loops[0].node)?;
    let n = if loops.iter().any(|l| l.is_for) { length(cx, fb, &lo, &hi) } else { si64(0) };
    let outs = loops.iter().map(|l| l.start(cx, fb, &n)).collect::<Result<Vec<_>, _>>()?;
    let i = fb.bind(cx, "i", lo.clone(), HType::i64());
    let mut sub = Fb::default();
    for (l, out) in loops.iter().zip(&outs) {
        l.step(cx, &mut sub, env, &i, &lo, out)?;
    }
    sub.push(set(i.as_var().expect("bound name"), add(i.clone(), si64(1))));
    fb.push(while_(icmp_slt(i, hi), sub.finish()));
    let mut inner = env.clone();
    for (((name, _), l), out) in group.iter().zip(&loops).zip(outs) {
        inner.insert(name.clone(), l.result(out, n.clone()));
    }
    lower(cx, fb, &inner, &rest)
}

fn lower_op(cx: &mut Cx, fb: &mut Fb, env: &Env, op: &str, t: &MType, rands: &[&Node]) -> Result<Val, MhkError> {
    let arity = |k: usize| {
        if rands.len() == k {
            Ok(())
        } else {
            Err(MhkError::Type(format!("`{op}` takes {k} operands, got {}", rands.len())))
        }
    };
    match op {
        "+" | "-" | "*" | "/" | "<" | "=" => {
            arity(2)?;
            let (a, at) = lower_scalar(cx, fb, env, rands[0])?;
            let (b, _) = lower_scalar(cx, fb, env, rands[1])?;
            let real = at.is_real();
            let x = match (op, real) {
                ("+", true) => fadd(a, b),
                ("+", false) => add(a, b),
                ("-", true) => fsub(a, b),
                ("-", false) => sub(a, b),
                ("*", true) => fmul(a, b),
                ("*", false) => mul(a, b),
                ("/", true) => fdiv(a, b),
                ("/", false) => sdiv(a, b),
                ("<", true) => cast(CastKind::Zext, fcmp_olt(a, b), HType::i64()),
                ("<", false) => cast(CastKind::Zext, icmp_slt(a, b), HType::i64()),
                ("=", true) => cast(CastKind::Zext, fcmp_oeq(a, b), HType::i64()),
                _ => cast(CastKind::Zext, icmp_eq(a, b), HType::i64()),
            };
            Ok(Val::Scalar(x, t.clone()))
        }
        "exp" | "log" | "sqrt" => {
            arity(1)?;
            let (a, _) = lower_scalar(cx, fb, env, rands[0])?;
            Ok(Val::Scalar(intrinsic(format!("{op}.f64"), vec![a]), t.clone()))
        }
        "index" => {
            arity(2)?;
            let Val::Array { ptr, elem, .. } = lower(cx, fb, env, rands[0])? else {
                return Err(MhkError::Type("index of a scalar".into()));
            };
            let (i, _) = lower_scalar(cx, fb, env, rands[1])?;
            Ok(Val::Scalar(load(gep(ptr, vec![i])), elem))
        }
        "size" => {
            arity(1)?;
            match lower(cx, fb, env, rands[0])? {
                Val::Array { len, .. } => Ok(Val::Scalar(len, MType::Nat)),
                Val::Scalar(..) => Err(MhkError::Type("size of a scalar".into())),
            }
        }
        "array-literal" => {
            let MType::Array(elem) = t else { return Err(MhkError::Type("array-literal must have an array type".into())) };
            if !elem.is_scalar() {
                return Err(unsupported("nested arrays"));
            }
            let n = si64(rands.len() as i64);
            let p = alloc(cx, fb, n.clone(), elem);
            for (k, r) in rands.iter().enumerate() {
                let (v, _) = lower_scalar(cx, fb, env, r)?;
                fb.push(store(v, gep(p.clone(), vec![si64(k as i64)])));
            }
            Ok(Val::Array { ptr: p, len: n, elem: (**elem).clone() })
        }
        "constant-value-array" => {
            arity(2)?;
            let MType::Array(elem) = t else {
                return Err(MhkError::Type("constant-value-array must have an array type".into()));
            };
            if !elem.is_scalar() {
                return Err(unsupported("nested arrays"));
            }
            let (n, nt) = lower_scalar(cx, fb, env, rands[0])?;
            let n = atom(cx, fb, n, &nt);
            let (c, ct) = lower_scalar(cx, fb, env, rands[1])?;
            let c = atom(cx, fb, c, &ct);
            let p = alloc(cx, fb, n.clone(), elem);
            let i = fb.bind(cx, "i", si64(0), HType::i64());
            let body = block(vec![
                store(c, gep(p.clone(), vec![i.clone()])),
                set(i.as_var().expect("bound name"), add(i.clone(), si64(1))),
            ]);
            fb.push(while_(icmp_slt(i, n.clone()), body));
            Ok(Val::Array { ptr: p, len: n, elem: (**elem).clone() })
        }
        "pair" => Err(unsupported("pairs")),
        other => Err(unsupported(format!("operator `{other}`"))),
    }
}
