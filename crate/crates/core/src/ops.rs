//! Primitive operators, casts and the arithmetic shared by constant folding
//! and the interpreter. Keeping one implementation is what makes folded and
//! executed results bit-identical.

use std::fmt;

use crate::types::HType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimOp {
    Add,
    Sub,
    SubNuw,
    Mul,
    UDiv,
    SDiv,
    URem,
    SRem,
    And,
    Or,
    Xor,
    Shl,
    LShr,
    AShr,
    FAdd,
    FSub,
    FMul,
    FDiv,
    FRem,
    IcmpEq,
    IcmpNe,
    IcmpUlt,
    IcmpUle,
    IcmpUgt,
    IcmpUge,
    IcmpSlt,
    IcmpSle,
    IcmpSgt,
    IcmpSge,
    FcmpOlt,
    FcmpOle,
    FcmpOgt,
    FcmpOge,
    FcmpOeq,
    FcmpOne,
}

const PRIM_NAMES: &[(PrimOp, &str)] = &[
    (PrimOp::Add, "add"),
    (PrimOp::Sub, "sub"),
    (PrimOp::SubNuw, "sub-nuw"),
    (PrimOp::Mul, "mul"),
    (PrimOp::UDiv, "udiv"),
    (PrimOp::SDiv, "sdiv"),
    (PrimOp::URem, "urem"),
    (PrimOp::SRem, "srem"),
    (PrimOp::And, "and"),
    (PrimOp::Or, "or"),
    (PrimOp::Xor, "xor"),
    (PrimOp::Shl, "shl"),
    (PrimOp::LShr, "lshr"),
    (PrimOp::AShr, "ashr"),
    (PrimOp::FAdd, "fadd"),
    (PrimOp::FSub, "fsub"),
    (PrimOp::FMul, "fmul"),
    (PrimOp::FDiv, "fdiv"),
    (PrimOp::FRem, "frem"),
    (PrimOp::IcmpEq, "icmp-eq"),
    (PrimOp::IcmpNe, "icmp-ne"),
    (PrimOp::IcmpUlt, "icmp-ult"),
    (PrimOp::IcmpUle, "icmp-ule"),
    (PrimOp::IcmpUgt, "icmp-ugt"),
    (PrimOp::IcmpUge, "icmp-uge"),
    (PrimOp::IcmpSlt, "icmp-slt"),
    (PrimOp::IcmpSle, "icmp-sle"),
    (PrimOp::IcmpSgt, "icmp-sgt"),
    (PrimOp::IcmpSge, "icmp-sge"),
    (PrimOp::FcmpOlt, "fcmp-olt"),
    (PrimOp::FcmpOle, "fcmp-ole"),
    (PrimOp::FcmpOgt, "fcmp-ogt"),
    (PrimOp::FcmpOge, "fcmp-oge"),
    (PrimOp::FcmpOeq, "fcmp-oeq"),
    (PrimOp::FcmpOne, "fcmp-one"),
];

impl PrimOp {
    pub fn all() -> impl Iterator<Item = PrimOp> {
        PRIM_NAMES.iter().map(|(op, _)| *op)
    }

    pub fn name(self) -> &'static str {
        PRIM_NAMES.iter().find(|(op, _)| *op == self).map(|(_, n)| *n).unwrap_or("?")
    }

    pub fn from_name(name: &str) -> Option<PrimOp> {
        PRIM_NAMES.iter().find(|(_, n)| *n == name).map(|(op, _)| *op)
    }

    pub fn is_compare(self) -> bool {
        self.is_icmp() || self.is_fcmp()
    }

    pub fn is_icmp(self) -> bool {
        use PrimOp::*;
        matches!(self, IcmpEq | IcmpNe | IcmpUlt | IcmpUle | IcmpUgt | IcmpUge | IcmpSlt | IcmpSle | IcmpSgt | IcmpSge)
    }

    pub fn is_fcmp(self) -> bool {
        use PrimOp::*;
        matches!(self, FcmpOlt | FcmpOle | FcmpOgt | FcmpOge | FcmpOeq | FcmpOne)
    }

    /// Float arithmetic (not comparisons).
    pub fn is_float_arith(self) -> bool {
        use PrimOp::*;
        matches!(self, FAdd | FSub | FMul | FDiv | FRem)
    }

    pub fn is_int_arith(self) -> bool {
        !self.is_compare() && !self.is_float_arith()
    }

    /// Operators that may trap at run time.
    pub fn can_trap(self) -> bool {
        use PrimOp::*;
        matches!(self, SubNuw | UDiv | SDiv | URem | SRem)
    }

    pub fn is_division(self) -> bool {
        use PrimOp::*;
        matches!(self, UDiv | SDiv | URem | SRem)
    }

    /// Result type given the (common) operand type.
    pub fn result_type(self, operand: &HType) -> HType {
        if self.is_compare() {
            HType::i1()
        } else {
            operand.clone()
        }
    }

    /// Whether the operator accepts operands of type `t`.
    pub fn accepts(self, t: &HType) -> bool {
        use PrimOp::*;
        match self {
            IcmpEq | IcmpNe => matches!(t, HType::Int(_) | HType::Sym | HType::HostBool | HType::Ptr(_)),
            _ if self.is_icmp() => t.is_int(),
            _ if self.is_fcmp() || self.is_float_arith() => t.is_float(),
            _ => t.is_int(),
        }
    }
}

impl fmt::Display for PrimOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CastKind {
    UiToFp,
    SiToFp,
    FpToUi,
    FpToSi,
    Trunc,
    Zext,
    Sext,
    /// Float width change (f32 <-> f64).
    FpCast,
    PtrCast,
}

const CAST_NAMES: &[(CastKind, &str)] = &[
    (CastKind::UiToFp, "ui->fp"),
    (CastKind::SiToFp, "si->fp"),
    (CastKind::FpToUi, "fp->ui"),
    (CastKind::FpToSi, "fp->si"),
    (CastKind::Trunc, "trunc"),
    (CastKind::Zext, "zext"),
    (CastKind::Sext, "sext"),
    (CastKind::FpCast, "fpcast"),
    (CastKind::PtrCast, "ptrcast"),
];

impl CastKind {
    pub fn name(self) -> &'static str {
        CAST_NAMES.iter().find(|(k, _)| *k == self).map(|(_, n)| *n).unwrap_or("?")
    }

    pub fn from_name(name: &str) -> Option<CastKind> {
        CAST_NAMES.iter().find(|(_, n)| *n == name).map(|(k, _)| *k)
    }

    pub fn all() -> impl Iterator<Item = CastKind> {
        CAST_NAMES.iter().map(|(k, _)| *k)
    }

    /// Whether casting `from` to `to` with this kind is well typed.
    pub fn accepts(self, from: &HType, to: &HType) -> bool {
        use CastKind::*;
        match (self, from, to) {
            (UiToFp | SiToFp, HType::Int(_), t) => t.is_float(),
            (FpToUi | FpToSi, f, HType::Int(_)) => f.is_float(),
            (Trunc, HType::Int(a), HType::Int(b)) => b < a,
            (Zext | Sext, HType::Int(a), HType::Int(b)) => b > a,
            (FpCast, a, b) => a.is_float() && b.is_float() && a != b,
            (PtrCast, HType::Ptr(_), HType::Ptr(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for CastKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A runtime value. Integers are stored as bits masked to their width;
/// floats are stored as IEEE bits so equality is bitwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Int { width: u8, bits: u64 },
    F32(u32),
    F64(u64),
    Ptr { buf: u32, off: u64 },
    Sym(u32),
    Bool(bool),
    Handle(u32),
    Unit,
}

pub const NULL_BUF: u32 = u32::MAX;

pub fn mask(width: u8, bits: u64) -> u64 {
    if width >= 64 {
        bits
    } else {
        bits & ((1u64 << width) - 1)
    }
}

pub fn sign_extend(width: u8, bits: u64) -> i64 {
    if width >= 64 {
        bits as i64
    } else {
        let shift = 64 - width as u32;
        ((bits << shift) as i64) >> shift
    }
}

impl Value {
    pub fn int(width: u8, v: i128) -> Value {
        Value::Int { width, bits: mask(width, v as u64) }
    }

    pub fn i64(v: i64) -> Value {
        Value::Int { width: 64, bits: v as u64 }
    }

    pub fn i1(b: bool) -> Value {
        Value::Int { width: 1, bits: b as u64 }
    }

    pub fn f32(v: f32) -> Value {
        Value::F32(v.to_bits())
    }

    pub fn f64(v: f64) -> Value {
        Value::F64(v.to_bits())
    }

    pub fn null() -> Value {
        Value::Ptr { buf: NULL_BUF, off: 0 }
    }

    pub fn as_f32(self) -> Option<f32> {
        match self {
            Value::F32(b) => Some(f32::from_bits(b)),
            _ => None,
        }
    }

    pub fn as_f64(self) -> Option<f64> {
        match self {
            Value::F64(b) => Some(f64::from_bits(b)),
            _ => None,
        }
    }

    pub fn as_bits(self) -> Option<u64> {
        match self {
            Value::Int { bits, .. } => Some(bits),
            _ => None,
        }
    }

    /// Sign-extended integer value.
    pub fn as_signed(self) -> Option<i64> {
        match self {
            Value::Int { width, bits } => Some(sign_extend(width, bits)),
            _ => None,
        }
    }

    /// Truth of a branch condition (i1 or host boolean).
    pub fn truthy(self) -> Option<bool> {
        match self {
            Value::Int { bits, .. } => Some(bits != 0),
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    /// Zero value of a scalar type.
    pub fn zero_of(t: &HType) -> Value {
        match t {
            HType::Int(w) => Value::Int { width: *w, bits: 0 },
            HType::F32 => Value::F32(0),
            HType::F64 => Value::F64(0),
            HType::Ptr(_) => Value::null(),
            HType::Sym => Value::Sym(0),
            HType::HostBool => Value::Bool(false),
            HType::Handle => Value::Handle(0),
            _ => Value::Unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithTrap {
    DivByZero,
    NuwOverflow,
}

/// Applies a binary operator or comparison. Operands must have matching,
/// accepted types; mismatches return `None`.
pub fn eval_prim(op: PrimOp, a: Value, b: Value) -> Option<Result<Value, ArithTrap>> {
    use PrimOp::*;
    Some(Ok(match (a, b) {
        (Value::Int { width: w, bits: x }, Value::Int { width: w2, bits: y }) if w == w2 => {
            let sx = sign_extend(w, x);
            let sy = sign_extend(w, y);
            let r = |v: u64| Value::Int { width: w, bits: mask(w, v) };
            match op {
                Add => r(x.wrapping_add(y)),
                Sub => r(x.wrapping_sub(y)),
                SubNuw => {
                    if y > x {
                        return Some(Err(ArithTrap::NuwOverflow));
                    }
                    r(x - y)
                }
                Mul => r(x.wrapping_mul(y)),
                UDiv | URem | SDiv | SRem if y == 0 => return Some(Err(ArithTrap::DivByZero)),
                UDiv => r(x / y),
                URem => r(x % y),
                SDiv => r(sx.wrapping_div(sy) as u64),
                SRem => r(sx.wrapping_rem(sy) as u64),
                And => r(x & y),
                Or => r(x | y),
                Xor => r(x ^ y),
                Shl => r(x.wrapping_shl((y % w as u64) as u32)),
                LShr => r(x >> (y % w as u64)),
                AShr => r((sx >> (y % w as u64)) as u64),
                IcmpEq => Value::i1(x == y),
                IcmpNe => Value::i1(x != y),
                IcmpUlt => Value::i1(x < y),
                IcmpUle => Value::i1(x <= y),
                IcmpUgt => Value::i1(x > y),
                IcmpUge => Value::i1(x >= y),
                IcmpSlt => Value::i1(sx < sy),
                IcmpSle => Value::i1(sx <= sy),
                IcmpSgt => Value::i1(sx > sy),
                IcmpSge => Value::i1(sx >= sy),
                _ => return None,
            }
        }
        (Value::F32(x), Value::F32(y)) => {
            let (x, y) = (f32::from_bits(x), f32::from_bits(y));
            match op {
                FAdd => Value::f32(x + y),
                FSub => Value::f32(x - y),
                FMul => Value::f32(x * y),
                FDiv => Value::f32(x / y),
                FRem => Value::f32(x % y),
                _ => return fcmp(op, x as f64, y as f64).map(Ok),
            }
        }
        (Value::F64(x), Value::F64(y)) => {
            let (x, y) = (f64::from_bits(x), f64::from_bits(y));
            match op {
                FAdd => Value::f64(x + y),
                FSub => Value::f64(x - y),
                FMul => Value::f64(x * y),
                FDiv => Value::f64(x / y),
                FRem => Value::f64(x % y),
                _ => return fcmp(op, x, y).map(Ok),
            }
        }
        (a, b) if matches!(op, IcmpEq | IcmpNe) && std::mem::discriminant(&a) == std::mem::discriminant(&b) => {
            Value::i1((a == b) == (op == IcmpEq))
        }
        _ => return None,
    }))
}

fn fcmp(op: PrimOp, x: f64, y: f64) -> Option<Value> {
    use PrimOp::*;
    // Ordered comparisons are false when either side is NaN.
    Some(Value::i1(match op {
        FcmpOlt => x < y,
        FcmpOle => x <= y,
        FcmpOgt => x > y,
        FcmpOge => x >= y,
        FcmpOeq => x == y,
        FcmpOne => !x.is_nan() && !y.is_nan() && x != y,
        _ => return None,
    }))
}

/// Applies a cast. Float-to-integer casts saturate (NaN gives 0).
pub fn eval_cast(kind: CastKind, v: Value, to: &HType) -> Option<Value> {
    use CastKind::*;
    Some(match (kind, v, to) {
        (UiToFp, Value::Int { bits, .. }, HType::F32) => Value::f32(bits as f32),
        (UiToFp, Value::Int { bits, .. }, HType::F64) => Value::f64(bits as f64),
        (SiToFp, Value::Int { width, bits }, HType::F32) => Value::f32(sign_extend(width, bits) as f32),
        (SiToFp, Value::Int { width, bits }, HType::F64) => Value::f64(sign_extend(width, bits) as f64),
        (FpToUi | FpToSi, v, HType::Int(w)) => {
            let f = match v {
                Value::F32(b) => f32::from_bits(b) as f64,
                Value::F64(b) => f64::from_bits(b),
                _ => return None,
            };
            let bits = if kind == FpToUi {
                let max = if *w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
                if f.is_nan() || f <= 0.0 {
                    0
                } else if f >= max as f64 {
                    max
                } else {
                    f as u64
                }
            } else {
                let (min, max) = if *w >= 64 {
                    (i64::MIN, i64::MAX)
                } else {
                    (-(1i64 << (w - 1)), (1i64 << (w - 1)) - 1)
                };
                if f.is_nan() {
                    0
                } else {
                    (f as i64).clamp(min, max) as u64
                }
            };
            Value::Int { width: *w, bits: mask(*w, bits) }
        }
        (Trunc, Value::Int { bits, .. }, HType::Int(w)) => Value::Int { width: *w, bits: mask(*w, bits) },
        (Zext, Value::Int { bits, .. }, HType::Int(w)) => Value::Int { width: *w, bits },
        (Sext, Value::Int { width, bits }, HType::Int(w)) => {
            Value::Int { width: *w, bits: mask(*w, sign_extend(width, bits) as u64) }
        }
        (FpCast, Value::F32(b), HType::F64) => Value::f64(f32::from_bits(b) as f64),
        (FpCast, Value::F64(b), HType::F32) => Value::f32(f64::from_bits(b) as f32),
        (PtrCast, p @ Value::Ptr { .. }, HType::Ptr(_)) => p,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for op in PrimOp::all() {
            assert_eq!(PrimOp::from_name(op.name()), Some(op));
        }
        for k in CastKind::all() {
            assert_eq!(CastKind::from_name(k.name()), Some(k));
        }
    }

    #[test]
    fn wrapping_and_traps() {
        let r = eval_prim(PrimOp::Add, Value::int(8, 250), Value::int(8, 10)).unwrap().unwrap();
        assert_eq!(r, Value::int(8, 4));
        assert_eq!(
            eval_prim(PrimOp::SDiv, Value::i64(1), Value::i64(0)).unwrap(),
            Err(ArithTrap::DivByZero)
        );
        assert_eq!(
            eval_prim(PrimOp::SubNuw, Value::i64(1), Value::i64(2)).unwrap(),
            Err(ArithTrap::NuwOverflow)
        );
        let r = eval_prim(PrimOp::SDiv, Value::i64(i64::MIN), Value::i64(-1)).unwrap().unwrap();
        assert_eq!(r, Value::i64(i64::MIN));
        let r = eval_prim(PrimOp::IcmpSlt, Value::int(8, -1), Value::int(8, 1)).unwrap().unwrap();
        assert_eq!(r, Value::i1(true));
        let r = eval_prim(PrimOp::IcmpUlt, Value::int(8, -1), Value::int(8, 1)).unwrap().unwrap();
        assert_eq!(r, Value::i1(false));
    }

    #[test]
    fn f32_rounds_each_step() {
        let a = Value::f32(0.1);
        let b = Value::f32(0.2);
        let r = eval_prim(PrimOp::FAdd, a, b).unwrap().unwrap();
        assert_eq!(r, Value::f32(0.1f32 + 0.2f32));
    }

    #[test]
    fn casts() {
        assert_eq!(eval_cast(CastKind::FpToSi, Value::f64(1e30), &HType::i32()), Some(Value::int(32, i32::MAX as i128)));
        assert_eq!(eval_cast(CastKind::FpToUi, Value::f64(-3.0), &HType::i8()), Some(Value::int(8, 0)));
        assert_eq!(eval_cast(CastKind::Sext, Value::int(8, -2), &HType::i64()), Some(Value::i64(-2)));
        assert_eq!(eval_cast(CastKind::Zext, Value::int(8, -2), &HType::i64()), Some(Value::i64(254)));
        assert_eq!(eval_cast(CastKind::UiToFp, Value::int(32, 3), &HType::F32), Some(Value::f32(3.0)));
    }
}
