use dslkit_testkit::fsa::{all_words, cadr_regex, more_chain_accepts};
use dslkit_testkit::mhk::{eval_program, normalize_program, ProgramGen, V};

#[test]
fn generators_are_deterministic_per_salt() {
    let draw = |salt| {
        let mut rng = dslkit_testkit::rng(salt);
        let mut g = ProgramGen::new(&mut rng);
        (0..20).map(|_| g.program(4).to_string()).collect::<Vec<_>>()
    };
    assert_eq!(draw(7), draw(7));
    assert_ne!(draw(7), draw(8));
}

#[test]
fn oracle_defines_every_generated_program() {
    let mut rng = dslkit_testkit::rng(0x0e);
    for _ in 0..500 {
        let mut g = ProgramGen::new(&mut rng);
        let p = g.program(4);
        let inputs = g.inputs(16);
        eval_program(&p, &inputs).unwrap_or_else(|e| panic!("{e:?}\n{p}"));
    }
}

#[test]
fn oracle_normalizes() {
    let a = V::Arr([2.0, 2.0, 4.0].into_iter().map(V::Real).collect());
    let want = V::Arr([0.25, 0.25, 0.5].into_iter().map(V::Real).collect());
    assert_eq!(eval_program(&normalize_program(), &[a]).unwrap(), want);
}

#[test]
fn word_oracles() {
    let words = all_words(&['c', 'a', 'd', 'r'], 6);
    assert_eq!(words.len(), 5461);
    let re = cadr_regex();
    assert_eq!(words.iter().filter(|w| re.is_match(w)).count(), 1 + 2 + 4 + 8 + 16);
    assert!(more_chain_accepts(3, "adr") && !more_chain_accepts(3, "ad") && !more_chain_accepts(3, "acr"));
}

#[test]
fn sawtooth_matches_golden() {
    let s = dslkit_testkit::synth::render(8, 5, &[(2.0, 0, 5, 1.0)]);
    assert_eq!(s, [-1.0, -0.5, 0.0, 0.5, -1.0]);
}
