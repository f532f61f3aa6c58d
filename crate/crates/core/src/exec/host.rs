use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lower::size_of;
use crate::ops::{sign_extend, Value, NULL_BUF};
use crate::types::{FnSig, HType};

use super::memory::{BufKind, Interner, Memory};

/// A value on the host side of the boundary.
#[derive(Clone)]
pub enum HostValue {
    Unit,
    Int(i64),
    Real(f64),
    Bool(bool),
    Symbol(String),
    Vector(Vec<HostValue>),
    /// Host data kept in its own representation; only registered host
    /// functions can look inside.
    Opaque(Arc<dyn Any + Send + Sync>),
}

impl fmt::Debug for HostValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HostValue::Unit => write!(f, "Unit"),
            HostValue::Int(i) => write!(f, "Int({i})"),
            HostValue::Real(r) => write!(f, "Real({r:?})"),
            HostValue::Bool(b) => write!(f, "Bool({b})"),
            HostValue::Symbol(s) => write!(f, "Symbol({s})"),
            HostValue::Vector(v) => f.debug_tuple("Vector").field(v).finish(),
            HostValue::Opaque(_) => write!(f, "Opaque(..)"),
        }
    }
}

impl PartialEq for HostValue {
    /// Reals compare bitwise; opaque values compare by identity.
    fn eq(&self, other: &HostValue) -> bool {
        match (self, other) {
            (HostValue::Unit, HostValue::Unit) => true,
            (HostValue::Int(a), HostValue::Int(b)) => a == b,
            (HostValue::Real(a), HostValue::Real(b)) => a.to_bits() == b.to_bits(),
            (HostValue::Bool(a), HostValue::Bool(b)) => a == b,
            (HostValue::Symbol(a), HostValue::Symbol(b)) => a == b,
            (HostValue::Vector(a), HostValue::Vector(b)) => a == b,
            (HostValue::Opaque(a), HostValue::Opaque(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl fmt::Display for HostValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HostValue::Unit => write!(f, "()"),
            HostValue::Int(i) => write!(f, "{i}"),
            HostValue::Real(r) => write!(f, "{r:?}"),
            HostValue::Bool(b) => write!(f, "{}", if *b { "#t" } else { "#f" }),
            HostValue::Symbol(s) => write!(f, "{s}"),
            HostValue::Vector(v) => {
                write!(f, "[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            HostValue::Opaque(_) => write!(f, "#<opaque>"),
        }
    }
}

impl HostValue {
    pub fn sym(s: impl Into<String>) -> HostValue {
        HostValue::Symbol(s.into())
    }

    pub fn symbols<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> HostValue {
        HostValue::Vector(items.into_iter().map(|s| HostValue::Symbol(s.as_ref().to_string())).collect())
    }

    pub fn reals(items: impl IntoIterator<Item = f64>) -> HostValue {
        HostValue::Vector(items.into_iter().map(HostValue::Real).collect())
    }

    pub fn ints(items: impl IntoIterator<Item = i64>) -> HostValue {
        HostValue::Vector(items.into_iter().map(HostValue::Int).collect())
    }

    pub fn wrap_opaque<T: Any + Send + Sync>(v: T) -> HostValue {
        HostValue::Opaque(Arc::new(v))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            HostValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            HostValue::Real(r) => Some(*r),
            HostValue::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            HostValue::Bool(b) => Some(*b),
            HostValue::Int(i) => Some(*i != 0),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[HostValue]> {
        match self {
            HostValue::Vector(v) => Some(v),
            _ => None,
        }
    }

    /// Elements of a vector of reals.
    pub fn to_reals(&self) -> Option<Vec<f64>> {
        self.as_vector()?.iter().map(|v| v.as_real()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot marshal argument {index}: {msg}")]
pub struct MarshalError {
    pub index: usize,
    pub msg: String,
}

pub type HostCallable = Arc<dyn Fn(&[HostValue]) -> Result<HostValue, String> + Send + Sync>;

#[derive(Clone)]
pub struct HostFn {
    pub sig: FnSig,
    pub f: HostCallable,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("host function {0} is already registered")]
pub struct DuplicateRegistration(pub String);

/// Named host callables reachable from `Host` and `External` call sites.
#[derive(Clone, Default)]
pub struct HostRegistry {
    fns: BTreeMap<String, HostFn>,
}

impl fmt::Debug for HostRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.fns.iter().map(|(n, h)| format!("{n}: {}", h.sig))).finish()
    }
}

impl HostRegistry {
    pub fn new() -> HostRegistry {
        HostRegistry::default()
    }

    pub fn register<F>(&mut self, name: &str, sig: FnSig, f: F) -> Result<(), DuplicateRegistration>
    where
        F: Fn(&[HostValue]) -> Result<HostValue, String> + Send + Sync + 'static,
    {
        if self.fns.contains_key(name) {
            return Err(DuplicateRegistration(name.to_string()));
        }
        self.replace(name, sig, f);
        Ok(())
    }

    pub fn replace<F>(&mut self, name: &str, sig: FnSig, f: F)
    where
        F: Fn(&[HostValue]) -> Result<HostValue, String> + Send + Sync + 'static,
    {
        self.fns.insert(name.to_string(), HostFn { sig, f: Arc::new(f) });
    }

    pub fn get(&self, name: &str) -> Option<&HostFn> {
        self.fns.get(name)
    }

    /// Calls a host function directly from the host side.
    pub fn call(&self, name: &str, args: &[HostValue]) -> Result<HostValue, String> {
        let h = self.get(name).ok_or_else(|| format!("no host function {name}"))?;
        (h.f)(args)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fns.keys().map(|s| s.as_str())
    }
}

/// Per-invocation side tables needed while marshaling.
#[derive(Default)]
pub struct Marshal {
    pub interner: Interner,
    pub handles: Vec<HostValue>,
}

#[allow(clippy::wrong_self_convention)]
impl Marshal {
    /// Converts a host value to a native value of type `t`, copying
    /// vectors into fresh arena buffers.
    pub fn to_native(&mut self, mem: &mut Memory, v: &HostValue, t: &HType) -> Result<Value, String> {
        Ok(match (t, v) {
            (HType::Int(1), HostValue::Bool(b)) => Value::i1(*b),
            (HType::Int(w), HostValue::Int(i)) => {
                let n = *i as i128;
                let fits = match *w {
                    64 => true,
                    1 => (0..=1).contains(&n),
                    w => n >= -(1i128 << (w - 1)) && n < (1i128 << w),
                };
                if !fits {
                    return Err(format!("{i} does not fit in {t}"));
                }
                Value::int(*w, *i as i128)
            }
            (HType::F32, HostValue::Real(r)) => Value::f32(*r as f32),
            (HType::F32, HostValue::Int(i)) => Value::f32(*i as f32),
            (HType::F64, HostValue::Real(r)) => Value::f64(*r),
            (HType::F64, HostValue::Int(i)) => Value::f64(*i as f64),
            (HType::Sym, HostValue::Symbol(s)) => Value::Sym(self.interner.intern(s)),
            (HType::HostBool, HostValue::Bool(b)) => Value::Bool(*b),
            (HType::Handle, h @ HostValue::Opaque(_)) => {
                self.handles.push(h.clone());
                Value::Handle((self.handles.len() - 1) as u32)
            }
            (HType::Ptr(_), HostValue::Unit) => Value::null(),
            (HType::Ptr(elem), HostValue::Vector(items)) => {
                if !elem.is_scalar() {
                    return Err(format!("cannot copy a vector into {t}"));
                }
                let buf = mem.alloc_array(elem, items.len() as u64, BufKind::Static).map_err(|k| k.to_string())?;
                let step = size_of(elem).map_err(|e| e.to_string())?;
                for (k, item) in items.iter().enumerate() {
                    let x = self.to_native(mem, item, elem)?;
                    let p = Value::Ptr { buf, off: k as u64 * step };
                    mem.store(p, elem, x).map_err(|k| k.to_string())?;
                }
                Value::Ptr { buf, off: 0 }
            }
            _ => return Err(format!("{} is not representable as {t}", describe(v))),
        })
    }

    /// Converts a native value back to the host. Pointers become a copy of
    /// the pointed-to elements up to the end of their buffer.
    pub fn from_native(&self, mem: &Memory, v: Value, t: &HType) -> Result<HostValue, String> {
        Ok(match (t, v) {
            (HType::Void, _) => HostValue::Unit,
            (HType::Int(_), Value::Int { width, bits }) => {
                if width == 1 {
                    HostValue::Int(bits as i64)
                } else {
                    HostValue::Int(sign_extend(width, bits))
                }
            }
            (HType::F32, Value::F32(b)) => HostValue::Real(f32::from_bits(b) as f64),
            (HType::F64, Value::F64(b)) => HostValue::Real(f64::from_bits(b)),
            (HType::Sym, Value::Sym(id)) => HostValue::Symbol(
                self.interner.name(id).map(str::to_string).unwrap_or_else(|| format!("#<sym {id}>")),
            ),
            (HType::HostBool, Value::Bool(b)) => HostValue::Bool(b),
            (HType::Handle, Value::Handle(h)) => {
                self.handles.get(h as usize).cloned().ok_or_else(|| format!("dangling handle {h}"))?
            }
            (HType::Ptr(_), Value::Ptr { buf: NULL_BUF, .. }) => HostValue::Unit,
            (HType::Ptr(elem), p @ Value::Ptr { buf, off }) => {
                if !elem.is_scalar() {
                    return Err(format!("cannot read back {t}"));
                }
                let step = size_of(elem).map_err(|e| e.to_string())?;
                let n = mem.remaining(p).ok_or_else(|| format!("pointer into dead buffer {buf}"))? / step;
                let mut items = Vec::with_capacity(n as usize);
                for k in 0..n {
                    let x = mem.load(Value::Ptr { buf, off: off + k * step }, elem).map_err(|k| k.to_string())?;
                    items.push(self.from_native(mem, x, elem)?);
                }
                HostValue::Vector(items)
            }
            _ => return Err(format!("value {v:?} does not have type {t}")),
        })
    }
}

fn describe(v: &HostValue) -> String {
    match v {
        HostValue::Vector(_) => "vector".into(),
        HostValue::Opaque(_) => "opaque value".into(),
        other => other.to_string(),
    }
}

/// Marshals a single host value outside of any invocation.
pub fn to_native(v: &HostValue, t: &HType) -> Result<Value, MarshalError> {
    let mut mem = Memory::default();
    Marshal::default().to_native(&mut mem, v, t).map_err(|msg| MarshalError { index: 0, msg })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars() {
        assert_eq!(to_native(&HostValue::Int(-3), &HType::i64()).unwrap(), Value::i64(-3));
        assert!(to_native(&HostValue::Real(3.5), &HType::i64()).is_err());
        assert!(to_native(&HostValue::Int(300), &HType::i8()).is_err());
        assert!(to_native(&HostValue::Int(255), &HType::i8()).is_ok());
        assert!(to_native(&HostValue::Int(-128), &HType::i8()).is_ok());
        assert!(to_native(&HostValue::Int(2), &HType::i1()).is_err());
        assert_eq!(to_native(&HostValue::Real(0.1), &HType::F32).unwrap(), Value::f32(0.1));
    }

    #[test]
    fn round_trip() {
        let mut mem = Memory::default();
        let mut m = Marshal::default();
        let cases = [
            (HostValue::Int(-7), HType::i64()),
            (HostValue::Real(0.25), HType::F64),
            (HostValue::Bool(true), HType::HostBool),
            (HostValue::sym("car"), HType::Sym),
            (HostValue::symbols(["c", "a", "d", "r"]), HType::ptr(HType::Sym)),
            (HostValue::ints([1, -2, 3]), HType::ptr(HType::i32())),
        ];
        for (v, t) in cases {
            let n = m.to_native(&mut mem, &v, &t).unwrap();
            assert_eq!(m.from_native(&mem, n, &t).unwrap(), v, "{t}");
        }
        assert_eq!(m.interner.lookup("r"), Some(4));
    }

    #[test]
    fn opaque_handles() {
        let mut mem = Memory::default();
        let mut m = Marshal::default();
        let h = HostValue::wrap_opaque(vec![1u8, 2, 3]);
        let n = m.to_native(&mut mem, &h, &HType::Handle).unwrap();
        assert_eq!(m.from_native(&mem, n, &HType::Handle).unwrap(), h);
        assert!(m.to_native(&mut mem, &h, &HType::ptr(HType::i8())).is_err());
    }

    #[test]
    fn registry() {
        let mut r = HostRegistry::new();
        let sig = FnSig::new(vec![HType::i64()], HType::i64());
        r.register("double", sig.clone(), |a| Ok(HostValue::Int(a[0].as_int().unwrap() * 2))).unwrap();
        assert_eq!(r.call("double", &[HostValue::Int(21)]).unwrap(), HostValue::Int(42));
        assert!(r.register("double", sig, |_| Ok(HostValue::Unit)).is_err());
    }
}
