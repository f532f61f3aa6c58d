use dslkit::exec::{compile_module, HostRegistry};
use dslkit::hir::{ExprKind, Rator};
use dslkit::lir::Op;
use dslkit::opt::{apply_hir_pass, PassConfig};
use dslkit_dsls::fsa::{build_more_chain, compile_fsa, fsa_match, more_chain_module, FsaSpec, FsaStyle};

fn words(alphabet: &[&'static str], len: usize) -> Vec<Vec<&'static str>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out.into_iter().flat_map(|w| alphabet.iter().map(move |a| [w.clone(), vec![*a]].concat())).collect();
    }
    out
}

#[test]
fn function_style_shape() {
    let m = compile_fsa(&FsaSpec::cadr(), FsaStyle::Functions).unwrap();
    assert_eq!(m.functions.len(), 4);
    let more = m.function("more").unwrap();
    let mut cases = 0;
    if let dslkit::hir::Stmt::If(_, t, _) = &more.body {
        if let dslkit::hir::Stmt::Switch(_, cs, _) = &**t {
            cases = cs.len();
        }
    }
    assert_eq!(cases, 3);
}

#[test]
fn block_style_has_no_calls() {
    let m = compile_fsa(&FsaSpec::cadr(), FsaStyle::Blocks).unwrap();
    assert_eq!(m.functions.len(), 1);
    let cm = compile_module(&m, &PassConfig::level(0), &HostRegistry::new()).unwrap();
    let calls = cm.lir().functions[0].blocks.iter().flat_map(|b| &b.instrs).filter(|i| matches!(i.op, Op::Call { .. })).count();
    assert_eq!(calls, 0);
    let out = cm.apply("cadr", &[dslkit::exec::HostValue::symbols(["c", "a", "r"])]).unwrap();
    assert_eq!(out.stats.calls, 0);
}

#[test]
fn accessor_words() {
    for style in [FsaStyle::Functions, FsaStyle::Blocks] {
        let m = compile_fsa(&FsaSpec::cadr(), style).unwrap();
        let cm = compile_module(&m, &PassConfig::level(3), &HostRegistry::new()).unwrap();
        assert!(fsa_match(&cm, "cadr", &["c", "a", "d", "r"]).unwrap());
        assert!(fsa_match(&cm, "cadr", &["c", "a", "r"]).unwrap());
        assert!(!fsa_match(&cm, "cadr", &["c", "a", "d"]).unwrap());
        assert!(!fsa_match::<&str>(&cm, "cadr", &[]).unwrap());
    }
}

#[test]
fn more_chain_language() {
    for len in 1..=5 {
        let m = more_chain_module(len);
        let cm = compile_module(&m, &PassConfig::level(2), &HostRegistry::new()).unwrap();
        for n in 0..=len {
            for w in words(&["c", "a", "d", "r"], n) {
                let want = n == len && w[..n - 1].iter().all(|s| *s == "a" || *s == "d") && w[n - 1] == "r";
                assert_eq!(fsa_match(&cm, "chain", &w).unwrap(), want, "len {len} word {w:?}");
            }
        }
    }
}

#[test]
fn more_chain_three_examples() {
    let cm = compile_module(&more_chain_module(3), &PassConfig::level(0), &HostRegistry::new()).unwrap();
    for w in [["a", "a", "r"], ["a", "d", "r"], ["d", "a", "r"], ["d", "d", "r"]] {
        assert!(fsa_match(&cm, "chain", &w).unwrap());
    }
    assert!(!fsa_match(&cm, "chain", &["a", "r", "r"]).unwrap());
}

#[test]
fn more_chain_inlines_to_one_function() {
    assert!(build_more_chain(4).iter().all(|f| f.is_always_inline()));
    let m = more_chain_module(4);
    let m = apply_hir_pass("dce", &apply_hir_pass("inline-always", &m).unwrap()).unwrap();
    assert_eq!(m.functions.len(), 1);
    assert_eq!(m.functions[0].name, "chain");
    let mut calls = 0;
    dslkit::hir::walk_stmt_exprs(&m.functions[0].body, &mut |e| {
        if matches!(e.kind, ExprKind::App(Rator::Defined(_), _)) {
            calls += 1;
        }
    });
    assert_eq!(calls, 0);
}
