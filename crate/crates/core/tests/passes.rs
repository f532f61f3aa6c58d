use dslkit::exec::{compile_module, ExecError, HostRegistry, HostValue, TrapKind};
use dslkit::hir::build::*;
use dslkit::hir::{typecheck_module, HModule};
use dslkit::lir::{static_instr_count, LModule};
use dslkit::lower::lower_module;
use dslkit::ops::CastKind;
use dslkit::opt::*;
use dslkit::HType;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seed() -> u64 {
    std::env::var("DSLKIT_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0x5eed_d51c)
}

fn pow_module() -> HModule {
    typecheck_module(&HModule::new("pow").with(pow_function()).unwrap()).unwrap()
}

/// A counting loop with an invariant product, for LICM and folding.
fn loop_module() -> HModule {
    let body = ret(let_(
        vec![binding("i", si64(0), HType::i64()), binding("s", si64(0), HType::i64())],
        while_(
            icmp_slt(var("i"), var("n")),
            block(vec![
                set("s", add(var("s"), mul(var("x"), add(si64(2), si64(3))))),
                set("i", add(var("i"), si64(1))),
            ]),
        ),
        var("s"),
    ));
    let f = function("f", vec![("x", HType::i64()), ("n", HType::i64())], HType::i64(), body, &[]).unwrap();
    typecheck_module(&HModule::new("loop").with(f).unwrap()).unwrap()
}

fn specialized_pow_lir() -> LModule {
    let s = Specialization::new("pow").bind("n", Binding::StaticValue(si64(10)));
    let (m, name) = specialize(&pow_module(), &s).unwrap();
    let l = lower_module(&m).unwrap();
    LModule { functions: l.functions.into_iter().filter(|f| f.name == name).collect(), ..l }
}

#[test]
fn lse_golden_on_straight_line_pow() {
    let l = specialized_pow_lir();
    assert_eq!(l.functions[0].blocks.len(), 1);
    let before = static_instr_count(&l);
    let after = static_instr_count(&lse_module(&l));
    assert_eq!((before.get("load"), before.get("store")), (19, 10));
    assert_eq!((after.get("load"), after.get("store")), (0, 0));
}

#[test]
fn const_fold_is_idempotent() {
    for m in [pow_module(), loop_module()] {
        let once = fold_module(&m);
        assert_eq!(fold_module(&once), once);
        let l = lower_module(&m).unwrap();
        let once = fold_module_lir(&l);
        assert_eq!(fold_module_lir(&once), once);
    }
    let once = fold_module_lir(&specialized_pow_lir());
    assert_eq!(fold_module_lir(&once), once);
}

#[test]
fn every_level_verifies() {
    for m in [pow_module(), loop_module()] {
        for level in 0..=3 {
            let out = run_pipeline(&m, &PassConfig::level(level)).unwrap();
            dslkit::lir::verify(&out.lir).unwrap();
        }
    }
}

#[test]
fn licm_hoists_invariant_product() {
    let run = |cfg: &PassConfig| {
        let cm = compile_module(&loop_module(), cfg, &HostRegistry::new()).unwrap();
        cm.apply("f", &[HostValue::Int(7), HostValue::Int(100)]).unwrap()
    };
    let without = run(&PassConfig { opt_level: 2, ..PassConfig::with_passes(&["dce"]) });
    let with = run(&PassConfig::level(3));
    assert_eq!(with.value, HostValue::Int(3500));
    assert_eq!(without.value, with.value);
    assert!(with.stats.instructions < without.stats.instructions);
}

#[test]
fn pow_agrees_across_levels_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(seed());
    let registry = HostRegistry::new();
    let o0 = compile_module(&pow_module(), &PassConfig::level(0), &registry).unwrap();
    let o3 = compile_module(&pow_module(), &PassConfig::level(3), &registry).unwrap();
    for _ in 0..1000 {
        let args = [HostValue::Int(rng.gen_range(-50..=50)), HostValue::Int(rng.gen_range(0..=20))];
        assert_eq!(o0.apply("pow", &args).unwrap().value, o3.apply("pow", &args).unwrap().value, "{args:?}");
    }
    assert_eq!(o3.apply("pow", &[HostValue::Int(2), HostValue::Int(10)]).unwrap().value, HostValue::Int(1024));
}

#[test]
fn load_after_free_traps() {
    let p = || var("p");
    let body = ret(let_(
        vec![binding("p", cast(CastKind::PtrCast, intrinsic("malloc", vec![si64(8)]), HType::ptr(HType::i64())), HType::ptr(HType::i64()))],
        block(vec![
            store(si64(5), p()),
            expr_stmt(intrinsic("free", vec![cast(CastKind::PtrCast, p(), HType::ptr(HType::i8()))])),
        ]),
        load(p()),
    ));
    let f = function("f", vec![], HType::i64(), body, &[]).unwrap();
    let m = HModule::new("uaf").with(f).unwrap();
    for level in [0, 3] {
        let cm = compile_module(&m, &PassConfig::level(level), &HostRegistry::new()).unwrap();
        match cm.apply("f", &[]) {
            Err(ExecError::Trap(t)) => assert_eq!(t.kind, TrapKind::UseAfterFree, "level {level}"),
            other => panic!("level {level}: {other:?}"),
        }
    }
}

#[test]
fn stats_are_consistent() {
    let cm = compile_module(&loop_module(), &PassConfig::level(0), &HostRegistry::new()).unwrap();
    let s = cm.apply("f", &[HostValue::Int(1), HostValue::Int(10)]).unwrap().stats;
    assert_eq!(s.back_edges, 10);
    assert!(s.loads + s.stores + s.calls <= s.instructions);
    let again = cm.apply("f", &[HostValue::Int(1), HostValue::Int(10)]).unwrap().stats;
    assert_eq!(s, again);
}

#[test]
fn globals_make_a_module_serial() {
    let mut m = pow_module();
    assert!(!compile_module(&m, &PassConfig::level(0), &HostRegistry::new()).unwrap().is_serial());
    m.add_global(dslkit::hir::Global { name: "g".into(), ty: HType::array(HType::F32, 4), init: vec![] }).unwrap();
    assert!(compile_module(&m, &PassConfig::level(0), &HostRegistry::new()).unwrap().is_serial());
}
