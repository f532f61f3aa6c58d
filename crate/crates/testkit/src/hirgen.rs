//! Random small HIR modules for differential testing across optimization
//! levels.
//!
//! Each module has `f(x: i64, y: i64) -> i64`, a bounded loop over an
//! accumulator, and `g(z: f64, w: f64) -> f64`, plus a helper `h` that
//! `f` may call. Divisions are left unguarded so traps are exercised.

use dslkit::exec::HostValue;
use dslkit::hir::build::*;
use dslkit::hir::{Expr, HModule};
use dslkit::ops::CastKind;
use dslkit::HType;
use rand::seq::SliceRandom;
use rand::Rng;

pub struct HirGen<'r, G: Rng> {
    rng: &'r mut G,
    in_loop: bool,
}

impl<'r, G: Rng> HirGen<'r, G> {
    pub fn new(rng: &'r mut G) -> Self {
        HirGen { rng, in_loop: false }
    }

    fn int_const(&mut self) -> Expr {
        match self.rng.gen_range(0..8) {
            0 => si64(*[i64::MIN, i64::MAX, -1, 0].choose(self.rng).expect("nonempty")),
            _ => si64(self.rng.gen_range(-6..=6)),
        }
    }

    fn int_leaf(&mut self) -> Expr {
        let mut names = vec!["x", "y"];
        if self.in_loop {
            names.extend(["acc", "i"]);
        }
        if self.rng.gen_bool(0.3) {
            self.int_const()
        } else {
            var(*names.choose(self.rng).expect("nonempty"))
        }
    }

    pub fn int(&mut self, depth: u32) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return self.int_leaf();
        }
        let d = depth - 1;
        let (a, b) = (self.int(d), self.int(d));
        match self.rng.gen_range(0..14) {
            0 | 1 => add(a, b),
            2 => sub(a, b),
            3 | 4 => mul(a, b),
            5 => sdiv(a, b),
            6 => srem(a, b),
            7 => and(a, b),
            8 => or(a, b),
            9 => xor(a, b),
            10 => shl(a, and(b, si64(63))),
            11 => ashr(a, and(b, si64(63))),
            12 => cast(CastKind::Zext, icmp_slt(a, b), HType::i64()),
            _ => app("h", vec![a, b]),
        }
    }

    pub fn real(&mut self, depth: u32) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return match self.rng.gen_range(0..3) {
                0 => fl64(self.rng.gen_range(-8..=8) as f64 / 4.0),
                1 => var("z"),
                _ => var("w"),
            };
        }
        let d = depth - 1;
        let (a, b) = (self.real(d), self.real(d));
        match self.rng.gen_range(0..6) {
            0 => fadd(a, b),
            1 => fsub(a, b),
            2 => fmul(a, b),
            3 => fdiv(a, b),
            4 => intrinsic("sqrt.f64", vec![fmul(a.clone(), a)]),
            _ => intrinsic("trunc.f64", vec![a]),
        }
    }

    /// A module with `f`, `g` and `h`.
    pub fn module(&mut self) -> HModule {
        let inline = self.rng.gen_bool(0.5);
        let attrs: &[&str] = if inline { &["always-inline"] } else { &[] };
        let h = function(
            "h",
            vec![("a", HType::i64()), ("b", HType::i64())],
            HType::i64(),
            ret(add(mul(var("a"), si64(3)), xor(var("b"), si64(5)))),
            attrs,
        )
        .expect("distinct parameters");
        let trips = self.rng.gen_range(0..5);
        let init = self.int(2);
        self.in_loop = true;
        let step = self.int(3);
        let cond = icmp_slt(self.int(2), self.int(2));
        let alt = self.int(2);
        self.in_loop = false;
        let loop_body = block(vec![
            set("acc", step),
            if_(cond, set("acc", alt), svoid()),
            set("i", add(var("i"), si64(1))),
        ]);
        self.in_loop = true;
        let result = self.int(2);
        self.in_loop = false;
        let body = ret(let_(
            vec![binding("acc", init, HType::i64()), binding("i", si64(0), HType::i64())],
            while_(icmp_slt(var("i"), si64(trips)), loop_body),
            result,
        ));
        let f = function("f", vec![("x", HType::i64()), ("y", HType::i64())], HType::i64(), body, &[])
            .expect("distinct parameters");
        let g = function("g", vec![("z", HType::F64), ("w", HType::F64)], HType::F64, ret(self.real(4)), &[])
            .expect("distinct parameters");
        HModule::new("random").with(f).and_then(|m| m.with(g)).and_then(|m| m.with(h)).expect("distinct names")
    }

    pub fn int_args(&mut self) -> Vec<HostValue> {
        (0..2)
            .map(|_| match self.rng.gen_range(0..6) {
                0 => HostValue::Int(*[i64::MIN, i64::MAX, 0].choose(self.rng).expect("nonempty")),
                _ => HostValue::Int(self.rng.gen_range(-20..=20)),
            })
            .collect()
    }

    pub fn real_args(&mut self) -> Vec<HostValue> {
        (0..2).map(|_| HostValue::Real(self.rng.gen_range(-40..=40) as f64 / 8.0)).collect()
    }
}

/// Equality that compares reals by bit pattern, with all NaNs equal.
pub fn same_value(a: &HostValue, b: &HostValue) -> bool {
    match (a, b) {
        (HostValue::Real(x), HostValue::Real(y)) => x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()),
        (HostValue::Vector(xs), HostValue::Vector(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| same_value(x, y))
        }
        _ => a == b,
    }
}
