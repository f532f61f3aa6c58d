use std::path::PathBuf;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let argv: Vec<String> = std::iter::once("dslkit").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (vec![], vec![]);
    let code = dslkit_cli::run(&argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn fsa_accepts_and_rejects() {
    let spec = data("cadr.fsa");
    for style in ["functions", "blocks"] {
        for (word, want) in [("cadr", true), ("c a d r", true), ("cr", true), ("cad", false), ("", false)] {
            let (code, out, err) = run(&["fsa", "--spec", &spec, "--word", word, "--style", style]);
            assert_eq!(code, 0, "{err}");
            assert_eq!(out.trim(), format!("accept={want}"), "{word:?} with {style}");
        }
    }
}

#[test]
fn mhk_normalize_from_data_files() {
    let (code, out, err) = run(&["mhk", "--src", &data("normalize.mhk"), "--arrays", &data("normalize.arrays")]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.trim(), "result=[0.25 0.25 0.5]");
    let (code, with_stats, _) =
        run(&["mhk", "--src", &data("normalize.mhk"), "--arrays", &data("normalize.arrays"), "--no-licm", "--stats"]);
    assert_eq!(code, 0);
    assert!(with_stats.starts_with(&out) && with_stats.contains("back_edges="), "{with_stats}");
}

#[test]
fn synth_writes_a_wav_file() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("chord.wav");
    let (code, out, err) = run(&["synth", "--score", &data("chord.score"), "--out", wav.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.trim(), "samples=44100");
    let bytes = std::fs::read(&wav).unwrap();
    assert_eq!(bytes.len(), 44 + 2 * 44100);
    assert_eq!(&bytes[..4], b"RIFF");
    assert_eq!(&bytes[8..12], b"WAVE");
}

#[test]
fn user_errors_exit_one() {
    let (code, _, err) = run(&["fsa", "--spec", "/nonexistent/spec.fsa", "--word", "car"]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["mhk", "--src", &data("normalize.mhk"), "--opt", "7"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn dump_shows_each_stage() {
    let (code, hir, _) = run(&["dump", "--src", &data("two_sums.mhk"), "--dsl", "mhk", "--stage", "hir"]);
    assert_eq!(code, 0);
    let (code, lir, _) = run(&["dump", "--src", &data("two_sums.mhk"), "--dsl", "mhk", "--stage", "lir"]);
    assert_eq!(code, 0);
    assert_ne!(hir, lir);
    assert!(!hir.is_empty() && !lir.is_empty());
}

#[test]
fn bench_emits_one_json_record_per_config() {
    let (code, out, err) = run(&["bench", "--suite", "normalize", "--n", "64", "--json"]);
    assert_eq!(code, 0, "{err}");
    let records: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let configs: Vec<&str> = records.iter().map(|r| r["config"].as_str().unwrap()).collect();
    assert_eq!(configs, ["licm", "no-licm"]);
    let count = |i: usize| records[i]["instructions"].as_u64().unwrap();
    assert!(count(0) < count(1));
}

#[test]
fn explicit_passes_override_the_level() {
    let src = data("normalize.mhk");
    let arrays = data("normalize.arrays");
    let (code, out, err) = run(&["mhk", "--src", &src, "--arrays", &arrays, "--passes", "const-fold,dce", "--stats"]);
    assert_eq!(code, 0, "{err}");
    let passes: Vec<&str> = out.lines().filter(|l| l.starts_with("pass=")).collect();
    // Both passes exist at HIR and at LIR level, so each runs twice.
    let names: Vec<&str> = passes.iter().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(names, ["pass=const-fold", "pass=dce", "pass=const-fold", "pass=dce"], "{out}");
    assert!(out.starts_with("result=[0.25 0.25 0.5]\n"));

    let (code, out, _) = run(&["fsa", "--spec", &data("cadr.fsa"), "--word", "cdr", "--passes", "inline-always", "--stats"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("accept=true\npass=inline-always before="), "{out}");

    let (code, _, err) = run(&["dump", "--src", &src, "--dsl", "mhk", "--stage", "lir", "--passes", "gvn"]);
    assert_eq!(code, 1);
    assert!(err.contains("gvn"), "{err}");
}
