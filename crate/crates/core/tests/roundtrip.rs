use dslkit::exec::{compile_module, HostRegistry, HostValue};
use dslkit::hir::build::*;
use dslkit::hir::HModule;
use dslkit::lir::{dump_module, parse_module};
use dslkit::opt::PassConfig;
use dslkit::sexp::{parse, Sexp};
use dslkit::HType;
use proptest::prelude::*;

fn datum() -> impl Strategy<Value = Sexp> {
    let leaf = prop_oneof![
        any::<i64>().prop_map(|i| Sexp::Int(i as i128)),
        (-1e12f64..1e12).prop_map(Sexp::Float),
        "[a-z][a-z0-9.-]{0,6}".prop_map(Sexp::Symbol),
        "[ -~]{0,8}".prop_map(Sexp::Str),
        any::<bool>().prop_map(Sexp::Bool),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| prop::collection::vec(inner, 0..6).prop_map(Sexp::List))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn sexp_print_parse(d in datum()) {
        prop_assert_eq!(parse(&d.to_string()).unwrap(), d.clone());
        prop_assert_eq!(parse(&d.pretty(20)).unwrap(), d);
    }

    #[test]
    fn vectors_marshal_round_trip(xs in prop::collection::vec(-1e6f64..1e6, 0..32)) {
        let body = ret_void();
        let f = function("f", vec![("a", HType::ptr(HType::F64)), ("n", HType::i64())], HType::Void, body, &[]).unwrap();
        let cm = compile_module(&HModule::new("m").with(f).unwrap(), &PassConfig::level(0), &HostRegistry::new()).unwrap();
        let out = cm.apply("f", &[HostValue::reals(xs.iter().copied())]).unwrap();
        prop_assert_eq!(&out.args_after[0], &HostValue::reals(xs.iter().copied()));
    }
}

#[test]
fn lir_dump_parse_identity_on_pow() {
    let m = HModule::new("pow").with(pow_function()).unwrap();
    for level in 0..=3 {
        let cm = compile_module(&m, &PassConfig::level(level), &HostRegistry::new()).unwrap();
        let text = dump_module(cm.lir());
        let back = parse_module(&text).unwrap();
        assert_eq!(&back, cm.lir());
        assert_eq!(dump_module(&back), text);
    }
}
