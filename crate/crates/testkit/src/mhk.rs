//! A direct tree-walking evaluator for mini-Hakaru programs in their
//! s-expression form, and a generator of random well-typed programs.
//!
//! The evaluator reads the grammar's node forms itself and shares no code
//! with the compiler path.

use std::fmt;

use dslkit::sexp::Sexp;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub enum V {
    Int(i64),
    Real(f64),
    Arr(Vec<V>),
}

impl PartialEq for V {
    /// Reals compare by bit pattern.
    fn eq(&self, other: &V) -> bool {
        match (self, other) {
            (V::Int(a), V::Int(b)) => a == b,
            (V::Real(a), V::Real(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (V::Arr(a), V::Arr(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for V {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            V::Int(i) => write!(f, "{i}"),
            V::Real(r) => write!(f, "{r:?}"),
            V::Arr(xs) => {
                write!(f, "[")?;
                for (k, x) in xs.iter().enumerate() {
                    if k > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    OutOfBounds,
    DivByZero,
    Unsupported(String),
    Malformed(String),
}

type R = Result<V, OracleError>;

fn bad(msg: impl Into<String>) -> OracleError {
    OracleError::Malformed(msg.into())
}

fn is_real_type(t: &Sexp) -> bool {
    t.is_symbol("real") || matches!(t.as_list(), Some([h, Sexp::Float(_)]) if h.is_symbol("const"))
}

fn items(e: &Sexp) -> Result<(&str, &[Sexp]), OracleError> {
    let l = e.as_list().ok_or_else(|| bad(format!("not a node: {e}")))?;
    let h = l.first().and_then(Sexp::as_symbol).ok_or_else(|| bad(format!("no head: {e}")))?;
    Ok((h, &l[1..]))
}

/// Evaluates a program `(mhk ((name type) ...) body)` on inputs given in
/// parameter order.
pub fn eval_program(prog: &Sexp, inputs: &[V]) -> R {
    let l = prog.as_list().ok_or_else(|| bad("program"))?;
    let [_, params, body] = l else { return Err(bad("program shape")) };
    let params = params.as_list().ok_or_else(|| bad("params"))?;
    if params.len() != inputs.len() {
        return Err(bad("input count"));
    }
    let mut env = vec![];
    for (p, v) in params.iter().zip(inputs) {
        let name = p.as_list().and_then(|l| l.first()).and_then(Sexp::as_symbol).ok_or_else(|| bad("param"))?;
        env.push((name.to_string(), v.clone()));
    }
    eval(body, &mut env)
}

fn lookup(env: &[(String, V)], name: &str) -> R {
    env.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v.clone()).ok_or_else(|| bad(format!("unbound {name}")))
}

fn truthy(v: &V) -> Result<bool, OracleError> {
    match v {
        V::Int(i) => Ok(*i != 0),
        V::Real(r) => Ok(!r.is_nan() && *r != 0.0),
        V::Arr(_) => Err(bad("array as condition")),
    }
}

fn int(v: &V) -> Result<i64, OracleError> {
    match v {
        V::Int(i) => Ok(*i),
        _ => Err(bad(format!("expected an integer, got {v}"))),
    }
}

fn arr(v: &V) -> Result<&[V], OracleError> {
    match v {
        V::Arr(xs) => Ok(xs),
        _ => Err(bad(format!("expected an array, got {v}"))),
    }
}

pub fn eval(e: &Sexp, env: &mut Vec<(String, V)>) -> R {
    let (head, f) = items(e)?;
    match (head, f) {
        ("val", [t, v]) => {
            if is_real_type(t) {
                v.as_f64().map(V::Real).ok_or_else(|| bad("real literal"))
            } else {
                v.as_int().and_then(|i| i64::try_from(i).ok()).map(V::Int).ok_or_else(|| bad("integer literal"))
            }
        }
        ("var", [_, s, _]) => lookup(env, s.as_symbol().ok_or_else(|| bad("var name"))?),
        ("if", [_, c, a, b]) => {
            if truthy(&eval(c, env)?)? {
                eval(a, env)
            } else {
                eval(b, env)
            }
        }
        ("match", [_, tst, branches @ ..]) => {
            let v = eval(tst, env)?;
            let first = branches.first().ok_or_else(|| bad("match without branches"))?;
            let (bh, bf) = items(first)?;
            let ("branch", [p, body]) = (bh, bf) else { return Err(bad("branch")) };
            let (ph, pf) = items(p)?;
            let ("pvar", [name]) = (ph, pf) else { return Err(OracleError::Unsupported("pair patterns".into())) };
            env.push((name.as_symbol().ok_or_else(|| bad("pvar"))?.to_string(), v));
            let r = eval(body, env);
            env.pop();
            r
        }
        ("for" | "summate", [t, idx, lo, hi, body]) => {
            let lo = int(&eval(lo, env)?)?;
            let hi = int(&eval(hi, env)?)?;
            let idx = idx.as_symbol().ok_or_else(|| bad("loop index"))?.to_string();
            let mut out = vec![];
            let mut acc = if is_real_type(t) { V::Real(0.0) } else { V::Int(0) };
            let mut i = lo;
            while i < hi {
                env.push((idx.clone(), V::Int(i)));
                let v = eval(body, env);
                env.pop();
                let v = v?;
                if head == "for" {
                    out.push(v);
                } else {
                    acc = arith("+", &acc, &v)?;
                }
                i += 1;
            }
            Ok(if head == "for" { V::Arr(out) } else { acc })
        }
        ("app", [_, rator, rands @ ..]) => {
            let (rh, rf) = items(rator)?;
            let ("intrf", [op]) = (rh, rf) else { return Err(OracleError::Unsupported("non-operator rator".into())) };
            let op = op.as_symbol().ok_or_else(|| bad("operator"))?;
            let vs = rands.iter().map(|r| eval(r, env)).collect::<Result<Vec<_>, _>>()?;
            apply(op, &vs)
        }
        ("bucket", _) => Err(OracleError::Unsupported("bucket".into())),
        _ => Err(bad(format!("unknown form {e}"))),
    }
}

fn arith(op: &str, a: &V, b: &V) -> R {
    Ok(match (a, b) {
        (V::Real(x), V::Real(y)) => match op {
            "+" => V::Real(x + y),
            "-" => V::Real(x - y),
            "*" => V::Real(x * y),
            "/" => V::Real(x / y),
            "<" => V::Int((x < y) as i64),
            "=" => V::Int((x == y) as i64),
            _ => return Err(bad(op.to_string())),
        },
        (V::Int(x), V::Int(y)) => match op {
            "+" => V::Int(x.wrapping_add(*y)),
            "-" => V::Int(x.wrapping_sub(*y)),
            "*" => V::Int(x.wrapping_mul(*y)),
            "/" => V::Int(x.checked_div(*y).ok_or(OracleError::DivByZero)?),
            "<" => V::Int((x < y) as i64),
            "=" => V::Int((x == y) as i64),
            _ => return Err(bad(op.to_string())),
        },
        _ => return Err(bad(format!("mixed operands {a} {op} {b}"))),
    })
}

fn apply(op: &str, vs: &[V]) -> R {
    match (op, vs) {
        ("+" | "-" | "*" | "/" | "<" | "=", [a, b]) => arith(op, a, b),
        ("exp", [V::Real(x)]) => Ok(V::Real(x.exp())),
        ("log", [V::Real(x)]) => Ok(V::Real(x.ln())),
        ("sqrt", [V::Real(x)]) => Ok(V::Real(x.sqrt())),
        ("index", [a, i]) => {
            let xs = arr(a)?;
            let i = int(i)?;
            usize::try_from(i).ok().and_then(|i| xs.get(i)).cloned().ok_or(OracleError::OutOfBounds)
        }
        ("size", [a]) => Ok(V::Int(arr(a)?.len() as i64)),
        ("array-literal", xs) => Ok(V::Arr(xs.to_vec())),
        ("constant-value-array", [n, c]) => {
            let n = usize::try_from(int(n)?).map_err(|_| OracleError::OutOfBounds)?;
            Ok(V::Arr(vec![c.clone(); n]))
        }
        _ => Err(OracleError::Unsupported(format!("operator {op} on {} operands", vs.len()))),
    }
}

// Node text helpers.

fn s(x: &str) -> Sexp {
    Sexp::sym(x)
}

pub fn real_t() -> Sexp {
    s("real")
}

pub fn nat_t() -> Sexp {
    s("nat")
}

pub fn arr_t() -> Sexp {
    Sexp::list([s("array"), s("real")])
}

pub fn val_real(x: f64) -> Sexp {
    Sexp::list([s("val"), real_t(), Sexp::Float(x)])
}

pub fn val_nat(k: i64) -> Sexp {
    Sexp::list([s("val"), nat_t(), Sexp::Int(k as i128)])
}

pub fn var(t: Sexp, name: &str) -> Sexp {
    Sexp::list([s("var"), t, s(name), Sexp::List(vec![])])
}

pub fn app(t: Sexp, op: &str, rands: Vec<Sexp>) -> Sexp {
    let mut l = vec![s("app"), t, Sexp::list([s("intrf"), s(op)])];
    l.extend(rands);
    Sexp::List(l)
}

pub fn if_(t: Sexp, c: Sexp, a: Sexp, b: Sexp) -> Sexp {
    Sexp::list([s("if"), t, c, a, b])
}

pub fn let_(t: Sexp, name: &str, init: Sexp, body: Sexp) -> Sexp {
    let branch = Sexp::list([s("branch"), Sexp::list([s("pvar"), s(name)]), body]);
    Sexp::list([s("match"), t, init, branch])
}

pub fn loop_(kind: &str, t: Sexp, idx: &str, lo: Sexp, hi: Sexp, body: Sexp) -> Sexp {
    Sexp::list([s(kind), t, s(idx), lo, hi, body])
}

pub fn program(params: &[(&str, Sexp)], body: Sexp) -> Sexp {
    let ps = params.iter().map(|(n, t)| Sexp::list([s(n), t.clone()]));
    Sexp::list([s("mhk"), Sexp::list(ps), body])
}

/// `for i < size a: a[i] / summate j < size a: a[j]`.
pub fn normalize_program() -> Sexp {
    let size = app(nat_t(), "size", vec![var(arr_t(), "a")]);
    let sum = loop_("summate", real_t(), "j", val_nat(0), size.clone(), app(real_t(), "index", vec![var(arr_t(), "a"), var(nat_t(), "j")]));
    let body = app(real_t(), "/", vec![app(real_t(), "index", vec![var(arr_t(), "a"), var(nat_t(), "i")]), sum]);
    program(&[("a", arr_t())], loop_("for", arr_t(), "i", val_nat(0), size, body))
}

/// `summate i < size a: a[i]` plus `summate i < size a: a[i] * a[i]`,
/// each bound to a name first so the two loops can fuse.
pub fn two_sums_program() -> Sexp {
    let size = || app(nat_t(), "size", vec![var(arr_t(), "a")]);
    let elem = || app(real_t(), "index", vec![var(arr_t(), "a"), var(nat_t(), "i")]);
    let s1 = loop_("summate", real_t(), "i", val_nat(0), size(), elem());
    let s2 = loop_("summate", real_t(), "i", val_nat(0), size(), app(real_t(), "*", vec![elem(), elem()]));
    let sum = app(real_t(), "+", vec![var(real_t(), "s1"), var(real_t(), "s2")]);
    program(&[("a", arr_t())], let_(real_t(), "s1", s1, let_(real_t(), "s2", s2, sum)))
}

/// Random well-typed programs over inputs `a`, `b` (real arrays), `k`
/// (nat) and `x` (real). Arrays are only indexed by loop variables ranging
/// over their own size, and nothing divides integers, so evaluation never
/// traps.
pub struct ProgramGen<'r, G: Rng> {
    rng: &'r mut G,
    next: usize,
    reals: Vec<String>,
    nats: Vec<String>,
    arrays: Vec<String>,
    /// Loop variables with the array whose size bounds them.
    indices: Vec<(String, String)>,
}

impl<'r, G: Rng> ProgramGen<'r, G> {
    pub fn new(rng: &'r mut G) -> Self {
        ProgramGen {
            rng,
            next: 0,
            reals: vec!["x".into()],
            nats: vec!["k".into()],
            arrays: vec!["a".into(), "b".into()],
            indices: vec![],
        }
    }

    pub fn params() -> Vec<(&'static str, Sexp)> {
        vec![("a", arr_t()), ("b", arr_t()), ("k", nat_t()), ("x", real_t())]
    }

    /// A program whose body has the given depth budget.
    pub fn program(&mut self, depth: u32) -> Sexp {
        let body = match self.rng.gen_range(0..3) {
            0 => self.real(depth),
            1 => self.nat(depth),
            _ => self.array(depth),
        };
        program(&Self::params(), body)
    }

    /// Random inputs matching [`ProgramGen::params`].
    pub fn inputs(&mut self, max_len: usize) -> Vec<V> {
        let arr = |rng: &mut G| {
            let n = rng.gen_range(0..=max_len);
            V::Arr((0..n).map(|_| V::Real(rng.gen_range(-8..=8) as f64 / 4.0)).collect())
        };
        let a = arr(self.rng);
        let b = arr(self.rng);
        vec![a, b, V::Int(self.rng.gen_range(0..6)), V::Real(self.rng.gen_range(-8..=8) as f64 / 2.0)]
    }

    fn fresh(&mut self, base: &str) -> String {
        self.next += 1;
        format!("{base}{}", self.next)
    }

    fn small_real(&mut self) -> Sexp {
        val_real(self.rng.gen_range(-8..=8) as f64 / 4.0)
    }

    fn size_of(&mut self) -> (Sexp, String) {
        let a = self.arrays.choose(self.rng).expect("inputs are in scope").clone();
        (app(nat_t(), "size", vec![var(arr_t(), &a)]), a)
    }

    fn real_leaf(&mut self) -> Sexp {
        match self.rng.gen_range(0..4) {
            0 => self.small_real(),
            1 if !self.indices.is_empty() => {
                let (i, a) = self.indices.choose(self.rng).expect("nonempty").clone();
                app(real_t(), "index", vec![var(arr_t(), &a), var(nat_t(), &i)])
            }
            _ => var(real_t(), &self.reals.choose(self.rng).expect("x is in scope").clone()),
        }
    }

    fn nat_leaf(&mut self) -> Sexp {
        match self.rng.gen_range(0..3) {
            0 => val_nat(self.rng.gen_range(0..5)),
            1 => self.size_of().0,
            _ => var(nat_t(), &self.nats.choose(self.rng).expect("k is in scope").clone()),
        }
    }

    /// Binds `init` of type `t` to a fresh name visible in `body`.
    fn with_let(&mut self, t: Sexp, init: Sexp, rt: Sexp, body: impl FnOnce(&mut Self) -> Sexp) -> Sexp {
        let name = self.fresh("v");
        let scope = match &t {
            t if t.is_symbol("real") => &mut self.reals,
            t if t.is_symbol("nat") => &mut self.nats,
            _ => &mut self.arrays,
        };
        scope.push(name.clone());
        let b = body(self);
        let scope = match &t {
            t if t.is_symbol("real") => &mut self.reals,
            t if t.is_symbol("nat") => &mut self.nats,
            _ => &mut self.arrays,
        };
        scope.pop();
        let_(rt, &name, init, b)
    }

    fn summate(&mut self, t: Sexp, depth: u32) -> Sexp {
        let (size, a) = self.size_of();
        let i = self.fresh("i");
        self.indices.push((i.clone(), a));
        let body = if t.is_symbol("real") { self.real(depth) } else { self.nat(depth) };
        self.indices.pop();
        loop_("summate", t, &i, val_nat(0), size, body)
    }

    pub fn real(&mut self, depth: u32) -> Sexp {
        if depth == 0 || self.rng.gen_bool(0.25) {
            return self.real_leaf();
        }
        let d = depth - 1;
        match self.rng.gen_range(0..10) {
            0 | 1 => {
                let op = *["+", "-", "*"].choose(self.rng).expect("nonempty");
                app(real_t(), op, vec![self.real(d), self.real(d)])
            }
            2 => {
                let r = self.real(d);
                let den = app(real_t(), "+", vec![val_real(1.5), app(real_t(), "*", vec![r.clone(), r])]);
                app(real_t(), "/", vec![self.real(d), den])
            }
            3 => {
                let c = if self.rng.gen_bool(0.7) {
                    app(nat_t(), "<", vec![self.real(d), self.real(d)])
                } else {
                    self.real(d)
                };
                if_(real_t(), c, self.real(d), self.real(d))
            }
            4 => {
                let r = self.real(d);
                match self.rng.gen_range(0..3) {
                    0 => app(real_t(), "sqrt", vec![app(real_t(), "*", vec![r.clone(), r])]),
                    1 => app(real_t(), "log", vec![app(real_t(), "+", vec![val_real(1.0), app(real_t(), "*", vec![r.clone(), r])])]),
                    _ => app(real_t(), "exp", vec![app(real_t(), "/", vec![r, val_real(8.0)])]),
                }
            }
            5 | 6 => self.summate(real_t(), d),
            7 => {
                let init = self.real(d);
                self.with_let(real_t(), init, real_t(), |g| g.real(d))
            }
            8 => {
                let init = self.array(d);
                self.with_let(arr_t(), init, real_t(), |g| g.real(d))
            }
            _ => {
                let n = self.nat(d);
                let body = app(real_t(), "*", vec![self.real(d), self.real(d)]);
                if_(real_t(), n, body, self.real_leaf())
            }
        }
    }

    pub fn nat(&mut self, depth: u32) -> Sexp {
        if depth == 0 || self.rng.gen_bool(0.3) {
            return self.nat_leaf();
        }
        let d = depth - 1;
        match self.rng.gen_range(0..6) {
            0 => {
                let op = *["+", "*"].choose(self.rng).expect("nonempty");
                app(nat_t(), op, vec![self.nat(d), self.nat(d)])
            }
            1 => app(nat_t(), "<", vec![self.real(d), self.real(d)]),
            2 => app(nat_t(), "=", vec![self.nat(d), self.nat(d)]),
            3 => self.summate(nat_t(), d),
            4 => {
                let init = self.nat(d);
                self.with_let(nat_t(), init, nat_t(), |g| g.nat(d))
            }
            _ => if_(nat_t(), self.nat(d), self.nat(d), self.nat(d)),
        }
    }

    pub fn array(&mut self, depth: u32) -> Sexp {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return var(arr_t(), &self.arrays.choose(self.rng).expect("inputs are in scope").clone());
        }
        let d = depth - 1;
        match self.rng.gen_range(0..5) {
            0 | 1 => {
                let (size, a) = self.size_of();
                let i = self.fresh("i");
                self.indices.push((i.clone(), a));
                let body = self.real(d);
                self.indices.pop();
                loop_("for", arr_t(), &i, val_nat(0), size, body)
            }
            2 => {
                let n = self.rng.gen_range(1..=6);
                let xs = (0..n).map(|_| self.real(d)).collect();
                app(arr_t(), "array-literal", xs)
            }
            3 => {
                let n = if self.rng.gen_bool(0.5) { self.size_of().0 } else { val_nat(self.rng.gen_range(0..5)) };
                app(arr_t(), "constant-value-array", vec![n, self.real(d)])
            }
            _ => {
                let init = self.array(d);
                self.with_let(arr_t(), init, arr_t(), |g| g.array(d))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_by_hand() {
        let a = V::Arr(vec![V::Real(2.0), V::Real(2.0), V::Real(4.0)]);
        let out = eval_program(&normalize_program(), &[a]).unwrap();
        assert_eq!(out, V::Arr(vec![V::Real(0.25), V::Real(0.25), V::Real(0.5)]));
    }

    #[test]
    fn two_sums_by_hand() {
        let a = V::Arr(vec![V::Real(1.0), V::Real(2.0), V::Real(3.0)]);
        assert_eq!(eval_program(&two_sums_program(), &[a]).unwrap(), V::Real(6.0 + 14.0));
    }

    #[test]
    fn real_condition_is_nonzero() {
        let e = if_(nat_t(), val_real(-0.0), val_nat(1), val_nat(2));
        assert_eq!(eval(&e, &mut vec![]).unwrap(), V::Int(2));
        let e = if_(nat_t(), val_real(f64::NAN), val_nat(1), val_nat(2));
        assert_eq!(eval(&e, &mut vec![]).unwrap(), V::Int(2));
    }

    #[test]
    fn out_of_bounds_reported() {
        let e = app(real_t(), "index", vec![var(arr_t(), "a"), val_nat(3)]);
        let mut env = vec![("a".to_string(), V::Arr(vec![]))];
        assert_eq!(eval(&e, &mut env), Err(OracleError::OutOfBounds));
    }
}
