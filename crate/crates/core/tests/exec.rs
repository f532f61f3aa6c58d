use dslkit::exec::{compile_module, to_native, CompiledModule, ExecError, HostRegistry, HostValue, TrapKind};
use dslkit::hir::build::*;
use dslkit::hir::HModule;
use dslkit::opt::{Binding, PassConfig, Specialization};
use dslkit::{FnSig, HType};

fn compile(m: HModule, level: u8) -> CompiledModule {
    compile_module(&m, &PassConfig::level(level), &HostRegistry::new()).unwrap()
}

fn pow_module() -> HModule {
    HModule::new("pow").with(pow_function()).unwrap()
}

#[test]
fn pow_at_every_level() {
    for level in 0..=3 {
        let cm = compile(pow_module(), level);
        let out = cm.apply("pow", &[HostValue::Int(2), HostValue::Int(10)]).unwrap();
        assert_eq!(out.value, HostValue::Int(1024), "level {level}");
        assert_eq!(out.stats.calls, 10);
    }
}

#[test]
fn specialized_pow_has_no_calls() {
    let cfg = PassConfig::level(3).specialize(Specialization::new("pow").bind("n", Binding::StaticValue(si64(10))));
    let cm = compile_module(&pow_module(), &cfg, &HostRegistry::new()).unwrap();
    let out = cm.apply("pow@spec0", &[HostValue::Int(3)]).unwrap();
    assert_eq!(out.value, HostValue::Int(59049));
    assert_eq!(out.stats.calls, 0);
    assert_eq!(out.stats.back_edges, 0);
}

#[test]
fn division_by_zero_traps_at_every_level() {
    let f = function("f", vec![("x", HType::i64())], HType::i64(), ret(sdiv(si64(7), var("x"))), &[]).unwrap();
    for level in [0, 3] {
        let cm = compile(HModule::new("m").with(f.clone()).unwrap(), level);
        match cm.apply("f", &[HostValue::Int(0)]) {
            Err(ExecError::Trap(t)) => assert_eq!(t.kind, TrapKind::DivByZero),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn nuw_checked_only_without_optimization() {
    let f = function("f", vec![("x", HType::i64())], HType::i64(), ret(sub_nuw(var("x"), si64(1))), &[]).unwrap();
    let cm = compile(HModule::new("m").with(f.clone()).unwrap(), 0);
    assert!(matches!(cm.apply("f", &[HostValue::Int(0)]), Err(ExecError::Trap(t)) if t.kind == TrapKind::NuwOverflow));
    let cm = compile(HModule::new("m").with(f).unwrap(), 1);
    assert_eq!(cm.apply("f", &[HostValue::Int(0)]).unwrap().value, HostValue::Int(-1));
}

#[test]
fn host_function_called() {
    let mut reg = HostRegistry::new();
    let sig = FnSig::new(vec![HType::i64()], HType::i64());
    reg.register("double", sig.clone(), |a: &[HostValue]| Ok(HostValue::Int(a[0].as_int().unwrap() * 2))).unwrap();
    assert!(reg.register("double", sig.clone(), |_: &[HostValue]| Ok(HostValue::Unit)).is_err());
    let f = function("f", vec![("x", HType::i64())], HType::i64(), ret(host("double", sig, vec![var("x")])), &[])
        .unwrap();
    let cm = compile_module(&HModule::new("m").with(f).unwrap(), &PassConfig::level(2), &reg).unwrap();
    assert_eq!(cm.apply("f", &[HostValue::Int(21)]).unwrap().value, HostValue::Int(42));
}

#[test]
fn unregistered_host_function_rejected_at_compile_time() {
    let sig = FnSig::new(vec![], HType::i64());
    let f = function("f", vec![], HType::i64(), ret(host("missing", sig, vec![])), &[]).unwrap();
    assert!(compile_module(&HModule::new("m").with(f).unwrap(), &PassConfig::level(0), &HostRegistry::new()).is_err());
}

#[test]
fn rounding_intrinsics() {
    let r = function("r", vec![("x", HType::F32)], HType::F32, ret(intrinsic("round.f32", vec![var("x")])), &[]).unwrap();
    let t = function("t", vec![("x", HType::F32)], HType::F32, ret(intrinsic("trunc.f32", vec![var("x")])), &[]).unwrap();
    let cm = compile(HModule::new("m").with(r).unwrap().with(t).unwrap(), 0);
    assert_eq!(cm.apply("r", &[HostValue::Real(2.5)]).unwrap().value, HostValue::Real(3.0));
    assert_eq!(cm.apply("t", &[HostValue::Real(-1.7)]).unwrap().value, HostValue::Real(-1.0));
}

#[test]
fn real_does_not_marshal_to_integer() {
    assert!(to_native(&HostValue::Real(3.5), &HType::i64()).is_err());
}

#[test]
fn arrays_updated_in_place() {
    let body = block(vec![
        expr_stmt(let_(
            vec![binding("i", si64(0), HType::i64())],
            while_(
                icmp_slt(var("i"), var("n")),
                block(vec![
                    store(mul(var("i"), si64(2)), gep(var("a"), vec![var("i")])),
                    set("i", add(var("i"), si64(1))),
                ]),
            ),
            i1(false),
        )),
        ret_void(),
    ]);
    let f = function("fill", vec![("a", HType::ptr(HType::i64())), ("n", HType::i64())], HType::Void, body, &[])
        .unwrap();
    for level in [0, 3] {
        let cm = compile(HModule::new("m").with(f.clone()).unwrap(), level);
        let out = cm.apply("fill", &[HostValue::ints([0; 4])]).unwrap();
        assert_eq!(out.args_after[0], HostValue::ints([0, 2, 4, 6]));
        assert_eq!(out.stats.back_edges, 4);
    }
}

#[test]
fn out_of_bounds_store_traps() {
    let f = function(
        "poke",
        vec![("a", HType::ptr(HType::i64())), ("k", HType::i64())],
        HType::Void,
        block(vec![store(si64(1), gep(var("a"), vec![var("k")])), ret_void()]),
        &[],
    )
    .unwrap();
    let cm = compile(HModule::new("m").with(f).unwrap(), 0);
    let err = cm.apply("poke", &[HostValue::ints([0; 2]), HostValue::Int(2)]).unwrap_err();
    assert!(matches!(err, ExecError::Trap(t) if t.kind == TrapKind::OobStore));
}

#[test]
fn deep_recursion_reports_stack_overflow() {
    let cm = compile(pow_module(), 0);
    let err = cm.apply("pow", &[HostValue::Int(1), HostValue::Int(1_000_000)]).unwrap_err();
    assert!(matches!(err, ExecError::Trap(t) if t.kind == TrapKind::StackOverflow));
}
