//! The fixed intrinsic table shared by the type checker, the verifier and
//! the interpreter.

use crate::types::{FnSig, HType};

pub const NAMES: &[&str] = &[
    "sqrt.f32", "sqrt.f64", "log.f32", "log.f64", "sin.f32", "sin.f64", "round.f32", "round.f64", "trunc.f32",
    "trunc.f64", "exp.f32", "exp.f64", "malloc", "free",
];

/// Signature of an intrinsic, or `None` if the name is not in the table.
pub fn signature(name: &str) -> Option<FnSig> {
    match name {
        "malloc" => Some(FnSig::new(vec![HType::i64()], HType::ptr(HType::i8()))),
        "free" => Some(FnSig::new(vec![HType::ptr(HType::i8())], HType::Void)),
        _ => {
            let (base, width) = name.rsplit_once('.')?;
            if !matches!(base, "sqrt" | "log" | "sin" | "round" | "trunc" | "exp") {
                return None;
            }
            let t = match width {
                "f32" => HType::F32,
                "f64" => HType::F64,
                _ => return None,
            };
            Some(FnSig::new(vec![t.clone()], t))
        }
    }
}

/// Intrinsics without side effects that never trap.
pub fn is_pure(name: &str) -> bool {
    signature(name).is_some() && !matches!(name, "malloc" | "free")
}

/// Round half away from zero.
pub fn round_f64(x: f64) -> f64 {
    x.round()
}

pub fn apply_math(name: &str, x: f64) -> Option<f64> {
    let base = name.split('.').next()?;
    Some(match base {
        "sqrt" => x.sqrt(),
        "log" => x.ln(),
        "sin" => x.sin(),
        "round" => round_f64(x),
        "trunc" => x.trunc(),
        "exp" => x.exp(),
        _ => return None,
    })
}

pub fn apply_math_f32(name: &str, x: f32) -> Option<f32> {
    let base = name.split('.').next()?;
    Some(match base {
        "sqrt" => x.sqrt(),
        "log" => x.ln(),
        "sin" => x.sin(),
        "round" => x.round(),
        "trunc" => x.trunc(),
        "exp" => x.exp(),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table() {
        for n in NAMES {
            assert!(signature(n).is_some(), "{n}");
        }
        assert!(signature("cos.f32").is_none());
        assert!(signature("sqrt.f16").is_none());
        assert!(is_pure("round.f32"));
        assert!(!is_pure("malloc"));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(apply_math_f32("round.f32", 2.5), Some(3.0));
        assert_eq!(apply_math_f32("round.f32", -2.5), Some(-3.0));
        assert_eq!(apply_math_f32("trunc.f32", -1.7), Some(-1.0));
    }
}
