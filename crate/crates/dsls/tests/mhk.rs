use dslkit::astdef::to_sexp;
use dslkit::exec::HostValue;
use dslkit_dsls::mhk::{anf, index_rewrite, mhk_compile, mhk_run, MhkError, MhkOptions, MhkProgram};
use dslkit_testkit::hirgen::same_value;
use dslkit_testkit::mhk::{self as oracle, ProgramGen, V};

fn host(v: &V) -> HostValue {
    match v {
        V::Int(i) => HostValue::Int(*i),
        V::Real(r) => HostValue::Real(*r),
        V::Arr(xs) => HostValue::Vector(xs.iter().map(host).collect()),
    }
}

fn reals(xs: &[f64]) -> V {
    V::Arr(xs.iter().map(|&x| V::Real(x)).collect())
}

fn opts(level: u8) -> MhkOptions {
    MhkOptions { opt_level: level, ..MhkOptions::default() }
}

fn run(p: &dslkit::sexp::Sexp, inputs: &[V], o: &MhkOptions) -> (HostValue, dslkit::exec::ExecStats) {
    let prog = MhkProgram::from_sexp(p).unwrap();
    let args: Vec<HostValue> = inputs.iter().map(host).collect();
    mhk_run(&prog, &args, o).unwrap()
}

#[test]
fn summate_of_four() {
    let prog = MhkProgram::parse(
        "(mhk ((a (array real)))
           (summate real i (val nat 0) (val nat 4)
             (app real (intrf index) (var (array real) a ()) (var nat i ()))))",
    )
    .unwrap();
    for level in 0..=3 {
        let (v, _) = mhk_run(&prog, &[HostValue::reals([1.0, 2.0, 3.0, 4.0])], &opts(level)).unwrap();
        assert_eq!(v, HostValue::Real(10.0));
    }
}

#[test]
fn normalize_small() {
    for level in 0..=3 {
        let (v, _) = run(&oracle::normalize_program(), &[reals(&[2.0, 2.0, 4.0])], &opts(level));
        assert_eq!(v, HostValue::reals([0.25, 0.25, 0.5]));
    }
}

#[test]
fn bucket_is_unsupported() {
    let prog = MhkProgram::parse(
        "(mhk ((a (array real)))
           (bucket real (val nat 0) (val nat 4) (nop)))",
    )
    .unwrap();
    let err = mhk_compile(&prog, &MhkOptions::default()).unwrap_err();
    assert!(matches!(err, MhkError::UnsupportedConstruct(_)), "{err}");
}

#[test]
fn reserved_names_rejected() {
    assert!(MhkProgram::parse("(mhk (($a real)) (var real $a ()))").is_err());
}

#[test]
fn fusion_halves_back_edges() {
    let n = 1000;
    let a = V::Arr((0..n).map(|k| V::Real(k as f64 / 8.0)).collect());
    let p = oracle::two_sums_program();
    let want = host(&oracle::eval_program(&p, std::slice::from_ref(&a)).unwrap());
    let (fused, fs) = run(&p, std::slice::from_ref(&a), &MhkOptions::default());
    let (split, ss) = run(&p, &[a], &MhkOptions { fuse: false, ..MhkOptions::default() });
    assert_eq!(fused, want);
    assert_eq!(split, want);
    assert!(fs.back_edges >= n && fs.back_edges <= n + 4, "fused: {}", fs.back_edges);
    assert!(ss.back_edges >= 2 * n, "unfused: {}", ss.back_edges);
}

fn normalize_instructions(n: usize, licm: bool) -> u64 {
    let a = V::Arr((0..n).map(|k| V::Real(1.0 + k as f64)).collect());
    run(&oracle::normalize_program(), &[a], &MhkOptions { licm, ..MhkOptions::default() }).1.instructions
}

#[test]
fn licm_makes_normalize_linear() {
    let with: Vec<u64> = [128, 256].iter().map(|&n| normalize_instructions(n, true)).collect();
    let without: Vec<u64> = [128, 256].iter().map(|&n| normalize_instructions(n, false)).collect();
    assert!(with[1] * 20 <= without[1], "with {} without {}", with[1], without[1]);
    let slope = |v: &[u64]| v[1] as f64 / v[0] as f64;
    assert!((3.5..=4.5).contains(&slope(&without)), "{without:?}");
    assert!((1.8..=2.2).contains(&slope(&with)), "{with:?}");
}

#[test]
fn random_programs_match_oracle() {
    let mut rng = dslkit_testkit::rng(0x3d4);
    for k in 0..300 {
        let mut g = ProgramGen::new(&mut rng);
        let p = g.program(4);
        let inputs = g.inputs(32);
        let want = oracle::eval_program(&p, &inputs).unwrap_or_else(|e| panic!("program {k}: oracle {e:?}\n{p}"));
        for o in [opts(0), opts(3), MhkOptions { fuse: false, licm: false, fold: false, opt_level: 2 }] {
            let (got, _) = run(&p, &inputs, &o);
            assert!(same_value(&got, &host(&want)), "program {k} with {o:?}: got {got}, want {want}\n{p}");
        }
    }
}

#[test]
fn anf_and_rewrite_preserve_meaning() {
    let mut rng = dslkit_testkit::rng(0xaf);
    for k in 0..300 {
        let mut g = ProgramGen::new(&mut rng);
        let p = g.program(4);
        let inputs = g.inputs(16);
        let prog = MhkProgram::from_sexp(&p).unwrap();
        let want = oracle::eval_program(&p, &inputs).unwrap();
        for body in [anf(&prog.body).unwrap(), index_rewrite(&prog.body).unwrap()] {
            let q = prog.with_body(body).to_sexp();
            assert_eq!(oracle::eval_program(&q, &inputs).unwrap(), want, "program {k}\n{p}\n{q}");
        }
    }
}

#[test]
fn anf_leaves_atomic_operands() {
    let mut rng = dslkit_testkit::rng(0xa7);
    for _ in 0..100 {
        let p = ProgramGen::new(&mut rng).program(4);
        let body = anf(&MhkProgram::from_sexp(&p).unwrap().body).unwrap();
        let text = to_sexp(&body);
        check_atomic(&text);
    }
}

fn check_atomic(e: &dslkit::sexp::Sexp) {
    let Some(items) = e.as_list() else { return };
    let atomic = |x: &dslkit::sexp::Sexp| matches!(x.head(), Some("var" | "val" | "intrf"));
    match e.head() {
        Some("app") => assert!(items[3..].iter().all(atomic), "{e}"),
        Some("if") => assert!(atomic(&items[2]), "{e}"),
        _ => {}
    }
    items.iter().for_each(check_atomic);
}

#[test]
fn bundled_sources_match_oracle_builders() {
    use dslkit_dsls::mhk::{NORMALIZE_SRC, TWO_SUMS_SRC};
    assert_eq!(MhkProgram::parse(NORMALIZE_SRC).unwrap().to_sexp(), oracle::normalize_program());
    assert_eq!(MhkProgram::parse(TWO_SUMS_SRC).unwrap().to_sexp(), oracle::two_sums_program());
}
