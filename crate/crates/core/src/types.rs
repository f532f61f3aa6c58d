//! Types shared by the high-level and low-level IRs.

use std::fmt;

use crate::sexp::Sexp;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HType {
    /// Two's-complement integer of the given bit width (1, 8, 16, 32 or 64).
    Int(u8),
    F32,
    F64,
    Void,
    Ptr(Box<HType>),
    Array(Box<HType>, Option<u64>),
    Struct(Vec<(String, HType)>),
    Fn(FnSig),
    /// Interned host symbol.
    Sym,
    /// Host boolean.
    HostBool,
    /// Opaque host value; only host functions can look inside.
    Handle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FnSig {
    pub params: Vec<HType>,
    pub ret: Box<HType>,
}

impl FnSig {
    pub fn new(params: Vec<HType>, ret: HType) -> Self {
        FnSig { params, ret: Box::new(ret) }
    }
}

pub const INT_WIDTHS: [u8; 5] = [1, 8, 16, 32, 64];

impl HType {
    pub fn i1() -> HType {
        HType::Int(1)
    }
    pub fn i8() -> HType {
        HType::Int(8)
    }
    pub fn i32() -> HType {
        HType::Int(32)
    }
    pub fn i64() -> HType {
        HType::Int(64)
    }
    pub fn ptr(elem: HType) -> HType {
        HType::Ptr(Box::new(elem))
    }
    pub fn array(elem: HType, len: u64) -> HType {
        HType::Array(Box::new(elem), Some(len))
    }

    pub fn is_int(&self) -> bool {
        matches!(self, HType::Int(_))
    }

    pub fn is_float(&self) -> bool {
        matches!(self, HType::F32 | HType::F64)
    }

    pub fn pointee(&self) -> Option<&HType> {
        match self {
            HType::Ptr(t) => Some(t),
            _ => None,
        }
    }

    /// Types a register or a single memory cell can hold.
    pub fn is_scalar(&self) -> bool {
        matches!(
            self,
            HType::Int(_) | HType::F32 | HType::F64 | HType::Ptr(_) | HType::Sym | HType::HostBool | HType::Handle
        )
    }

    /// Types usable as branch conditions.
    pub fn is_condition(&self) -> bool {
        matches!(self, HType::Int(1) | HType::HostBool)
    }

    /// Checks structural invariants: valid widths, positive array lengths,
    /// unique struct field names.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            HType::Int(w) if !INT_WIDTHS.contains(w) => Err(format!("invalid integer width {w}")),
            HType::Ptr(t) => t.validate(),
            HType::Array(_, Some(0)) => Err("array length must be positive".into()),
            HType::Array(t, _) => t.validate(),
            HType::Struct(fields) => {
                let mut seen = std::collections::HashSet::new();
                for (name, t) in fields {
                    if !seen.insert(name) {
                        return Err(format!("duplicate struct field `{name}`"));
                    }
                    t.validate()?;
                }
                Ok(())
            }
            HType::Fn(sig) => {
                sig.params.iter().try_for_each(HType::validate)?;
                sig.ret.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn to_sexp(&self) -> Sexp {
        match self {
            HType::Int(w) => Sexp::sym(format!("i{w}")),
            HType::F32 => Sexp::sym("f32"),
            HType::F64 => Sexp::sym("f64"),
            HType::Void => Sexp::sym("void"),
            HType::Sym => Sexp::sym("sym"),
            HType::HostBool => Sexp::sym("bool"),
            HType::Handle => Sexp::sym("handle"),
            HType::Ptr(t) => Sexp::list([Sexp::sym("ptr"), t.to_sexp()]),
            HType::Array(t, len) => {
                let mut v = vec![Sexp::sym("array"), t.to_sexp()];
                if let Some(n) = len {
                    v.push(Sexp::Int(*n as i128));
                }
                Sexp::List(v)
            }
            HType::Struct(fields) => {
                let mut v = vec![Sexp::sym("struct")];
                v.extend(fields.iter().map(|(n, t)| Sexp::list([Sexp::sym(n), t.to_sexp()])));
                Sexp::List(v)
            }
            HType::Fn(sig) => sig.to_sexp(),
        }
    }

    pub fn from_sexp(d: &Sexp) -> Result<HType, String> {
        let bad = || format!("malformed type {d}");
        if let Some(s) = d.as_symbol() {
            return Ok(match s {
                "f32" => HType::F32,
                "f64" => HType::F64,
                "void" => HType::Void,
                "sym" => HType::Sym,
                "bool" => HType::HostBool,
                "handle" => HType::Handle,
                _ => {
                    let w: u8 = s.strip_prefix('i').and_then(|w| w.parse().ok()).ok_or_else(bad)?;
                    HType::Int(w)
                }
            });
        }
        let items = d.as_list().ok_or_else(bad)?;
        match (d.head(), items.len()) {
            (Some("ptr"), 2) => Ok(HType::ptr(HType::from_sexp(&items[1])?)),
            (Some("array"), 2) => Ok(HType::Array(Box::new(HType::from_sexp(&items[1])?), None)),
            (Some("array"), 3) => {
                let n = items[2].as_int().filter(|n| *n >= 0).ok_or_else(bad)?;
                Ok(HType::Array(Box::new(HType::from_sexp(&items[1])?), Some(n as u64)))
            }
            (Some("struct"), _) => items[1..]
                .iter()
                .map(|f| match f.as_list() {
                    Some([Sexp::Symbol(n), t]) => Ok((n.clone(), HType::from_sexp(t)?)),
                    _ => Err(bad()),
                })
                .collect::<Result<_, _>>()
                .map(HType::Struct),
            (Some("fn"), 3) => Ok(HType::Fn(FnSig::from_sexp(d)?)),
            _ => Err(bad()),
        }
    }
}

impl FnSig {
    pub fn to_sexp(&self) -> Sexp {
        Sexp::list([
            Sexp::sym("fn"),
            Sexp::List(self.params.iter().map(HType::to_sexp).collect()),
            self.ret.to_sexp(),
        ])
    }

    pub fn from_sexp(d: &Sexp) -> Result<FnSig, String> {
        match d.as_list() {
            Some([head, Sexp::List(params), ret]) if head.is_symbol("fn") => Ok(FnSig::new(
                params.iter().map(HType::from_sexp).collect::<Result<_, _>>()?,
                HType::from_sexp(ret)?,
            )),
            _ => Err(format!("malformed function type {d}")),
        }
    }
}

impl fmt::Display for HType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sexp())
    }
}

impl fmt::Display for FnSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sexp())
    }
}
