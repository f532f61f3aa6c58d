//! The `dslkit` command line: runs the bundled DSLs, dumps IR and emits
//! instruction-count benchmark reports.
//!
//! Exit status is 0 on success, 1 on a user error (bad flags, unreadable
//! or invalid input, a trap in the user's program) and 2 on an internal
//! error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use dslkit::exec::{compile_module, CompileError, CompiledModule, ExecError, ExecStats, HostRegistry, HostValue};
use dslkit::opt::{PassConfig, PASS_NAMES};
use dslkit_dsls::fsa::{compile_fsa, parse_fsa, FsaError, FsaSpec, FsaStyle};
use dslkit_dsls::mhk::{self, mhk_compile, parse_inputs, MhkError, MhkOptions, MhkProgram};
use dslkit_dsls::synth::{self, parse_score, render, write_wav, SynthError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn user(e: impl std::fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

impl From<CompileError> for CliError {
    fn from(e: CompileError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Trap(_) | ExecError::Marshal(_) => user(e),
            e => CliError::Internal(e.to_string()),
        }
    }
}

impl From<FsaError> for CliError {
    fn from(e: FsaError) -> Self {
        user(e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Compile(c) => c.into(),
            SynthError::Exec(x) => x.into(),
            e => user(e),
        }
    }
}

impl From<MhkError> for CliError {
    fn from(e: MhkError) -> Self {
        match e {
            MhkError::Compile(c) => c.into(),
            MhkError::Exec(x) => x.into(),
            e => user(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dslkit", about = "Compile and run the dslkit case-study DSLs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dsl {
    Fsa,
    Mhk,
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Hir,
    Lir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Normalize,
    Fsa,
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Style {
    Functions,
    Blocks,
}

impl From<Style> for FsaStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::Functions => FsaStyle::Functions,
            Style::Blocks => FsaStyle::Blocks,
        }
    }
}

fn opt_level() -> clap::builder::RangedI64ValueParser<u8> {
    clap::value_parser!(u8).range(0..=3)
}

fn pass_name() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(PASS_NAMES.iter().copied())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an automaton on a word. A word without spaces is read one
    /// character per symbol; otherwise it is split on whitespace.
    Fsa {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        word: String,
        #[arg(long, value_enum, default_value = "functions")]
        style: Style,
        #[arg(long, default_value = "3", value_parser = opt_level())]
        opt: u8,
        /// Run exactly these passes, in order, instead of the `--opt` pipeline.
        #[arg(long, value_delimiter = ',', value_parser = pass_name())]
        passes: Option<Vec<String>>,
        #[arg(long)]
        stats: bool,
    },
    /// Render a score to a WAV file.
    Synth {
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "3", value_parser = opt_level())]
        opt: u8,
        /// Pass the rate and buffer at run time instead of specializing.
        #[arg(long)]
        no_specialize: bool,
        #[arg(long)]
        stats: bool,
    },
    /// Run a mini-Hakaru program.
    Mhk {
        #[arg(long)]
        src: PathBuf,
        /// Inputs as `((name value ...) ...)`.
        #[arg(long)]
        arrays: Option<PathBuf>,
        #[arg(long)]
        no_fuse: bool,
        #[arg(long)]
        no_licm: bool,
        #[arg(long)]
        no_fold: bool,
        #[arg(long, default_value = "3", value_parser = opt_level())]
        opt: u8,
        /// Run exactly these passes, in order, instead of the `--opt` pipeline.
        #[arg(long, value_delimiter = ',', value_parser = pass_name())]
        passes: Option<Vec<String>>,
        #[arg(long)]
        stats: bool,
    },
    /// Print the IR of a program after optimization.
    Dump {
        #[arg(long)]
        src: PathBuf,
        #[arg(long, value_enum)]
        dsl: Dsl,
        #[arg(long, value_enum)]
        stage: Stage,
        #[arg(long, default_value = "0", value_parser = opt_level())]
        opt: u8,
        /// Run exactly these passes, in order, instead of the `--opt` pipeline.
        #[arg(long, value_delimiter = ',', value_parser = pass_name())]
        passes: Option<Vec<String>>,
        #[arg(long, value_enum, default_value = "functions")]
        style: Style,
    },
    /// Instruction-count benchmarks, one record per configuration.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value = "256")]
        n: usize,
        #[arg(long)]
        json: bool,
    },
}

/// One benchmark measurement. Times are wall-clock and informational.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub suite: String,
    pub config: String,
    pub instructions: u64,
    pub back_edges: u64,
    pub compile_ms: f64,
    pub run_ms: f64,
}

/// Runs the command line `argv` (program name first), writing to `out`
/// and `err`, and returns the exit status.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let shown = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{shown}");
                1
            } else {
                let _ = write!(out, "{shown}");
                0
            };
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "dslkit: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> CliError {
    CliError::Internal(format!("writing output: {e}"))
}

/// The `--opt` pipeline, or the explicit `--passes` list when given.
fn pass_config(base: PassConfig, passes: &Option<Vec<String>>) -> PassConfig {
    match passes {
        Some(p) => PassConfig { passes: Some(p.clone()), ..base },
        None => base,
    }
}

fn write_stats(out: &mut dyn Write, cm: &CompiledModule, s: &ExecStats) -> Result<(), CliError> {
    for p in cm.pass_stats() {
        writeln!(out, "{p}").map_err(io)?;
    }
    writeln!(out, "{}", stats_line(s)).map_err(io)
}

fn stats_line(s: &ExecStats) -> String {
    format!(
        "instructions={} loads={} stores={} calls={} back_edges={} allocations={}",
        s.instructions, s.loads, s.stores, s.calls, s.back_edges, s.allocations
    )
}

pub fn execute(cmd: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Fsa { spec, word, style, opt, passes, stats } => {
            let spec = parse_fsa(&read(spec)?)?;
            let cfg = pass_config(PassConfig::level(*opt), passes);
            let cm = compile_module(&compile_fsa(&spec, (*style).into())?, &cfg, &HostRegistry::new())?;
            let r = cm.apply(&spec.name, &[HostValue::symbols(split_word(word))])?;
            writeln!(out, "accept={}", r.value == HostValue::Bool(true)).map_err(io)?;
            if *stats {
                write_stats(out, &cm, &r.stats)?;
            }
            Ok(())
        }
        Command::Synth { score, out: path, opt, no_specialize, stats } => {
            let score = parse_score(&read(score)?)?;
            let r = render(&score, *opt, !no_specialize)?;
            write_wav(&r.samples, score.rate, path).map_err(|e| user(format!("{}: {e}", path.display())))?;
            writeln!(out, "samples={}", r.samples.len()).map_err(io)?;
            if *stats {
                writeln!(out, "{}", stats_line(&r.stats)).map_err(io)?;
            }
            Ok(())
        }
        Command::Mhk { src, arrays, no_fuse, no_licm, no_fold, opt, passes, stats } => {
            let prog = MhkProgram::parse(&read(src)?)?;
            let inputs = match arrays {
                Some(p) => parse_inputs(&prog, &read(p)?)?,
                None => parse_inputs(&prog, "()")?,
            };
            let o = MhkOptions { fuse: !no_fuse, licm: !no_licm, fold: !no_fold, opt_level: *opt };
            let m = mhk_compile(&prog, &o)?;
            let cm = compile_module(&m, &pass_config(o.pass_config(), passes), &HostRegistry::new())?;
            let r = cm.apply(mhk::MAIN, &inputs)?;
            writeln!(out, "result={}", r.value).map_err(io)?;
            if *stats {
                write_stats(out, &cm, &r.stats)?;
            }
            Ok(())
        }
        Command::Dump { src, dsl, stage, opt, passes, style } => {
            let text = read(src)?;
            let (m, cfg) = match dsl {
                Dsl::Fsa => (compile_fsa(&parse_fsa(&text)?, (*style).into())?, PassConfig::level(*opt)),
                Dsl::Mhk => {
                    let o = MhkOptions { opt_level: *opt, ..MhkOptions::default() };
                    (mhk_compile(&MhkProgram::parse(&text)?, &o)?, o.pass_config())
                }
                Dsl::Synth => (synth::synth_build(&parse_score(&text)?)?, PassConfig::level(*opt)),
            };
            let cm = compile_module(&m, &pass_config(cfg, passes), &HostRegistry::new())?;
            let dumped = match stage {
                Stage::Hir => dslkit::hir::dump_module(cm.hir()),
                Stage::Lir => dslkit::lir::dump_module(cm.lir()),
            };
            write!(out, "{dumped}").map_err(io)?;
            if !dumped.ends_with('\n') {
                writeln!(out).map_err(io)?;
            }
            Ok(())
        }
        Command::Bench { suite, n, json } => {
            for r in bench(*suite, *n)? {
                if *json {
                    let line = serde_json::to_string(&r).map_err(|e| CliError::Internal(e.to_string()))?;
                    writeln!(out, "{line}").map_err(io)?;
                } else {
                    writeln!(
                        out,
                        "{} {}: instructions={} back_edges={} compile_ms={:.3} run_ms={:.3}",
                        r.suite, r.config, r.instructions, r.back_edges, r.compile_ms, r.run_ms
                    )
                    .map_err(io)?;
                }
            }
            Ok(())
        }
    }
}

fn split_word(word: &str) -> Vec<String> {
    if word.contains(char::is_whitespace) {
        word.split_whitespace().map(str::to_string).collect()
    } else {
        word.chars().map(String::from).collect()
    }
}

fn compile_fsa_module(spec: &FsaSpec, style: FsaStyle, opt: u8) -> Result<CompiledModule, CliError> {
    Ok(compile_module(&compile_fsa(spec, style)?, &PassConfig::level(opt), &HostRegistry::new())?)
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// The records of one suite at size `n`.
pub fn bench(suite: Suite, n: usize) -> Result<Vec<BenchRecord>, CliError> {
    let record = |config: &str, s: &ExecStats, compile_ms: f64, run_ms: f64| BenchRecord {
        suite: format!("{suite:?}").to_lowercase(),
        config: config.into(),
        instructions: s.instructions,
        back_edges: s.back_edges,
        compile_ms,
        run_ms,
    };
    let mut out = vec![];
    match suite {
        Suite::Normalize => {
            let prog = MhkProgram::parse(mhk::NORMALIZE_SRC)?;
            let input = HostValue::reals((0..n).map(|k| 1.0 + k as f64));
            for (config, licm) in [("licm", true), ("no-licm", false)] {
                let o = MhkOptions { licm, ..MhkOptions::default() };
                let cm = compile_module(&mhk_compile(&prog, &o)?, &o.pass_config(), &HostRegistry::new())?;
                let t = Instant::now();
                let r = cm.apply(mhk::MAIN, std::slice::from_ref(&input))?;
                out.push(record(config, &r.stats, ms(cm.compile_time()), ms(t.elapsed())));
            }
        }
        Suite::Fsa => {
            let spec = FsaSpec::cadr();
            let words: Vec<Vec<HostValue>> = (0..n).map(|k| vec![HostValue::symbols(nth_word(k))]).collect();
            for (config, style, level) in
                [("functions-o0", FsaStyle::Functions, 0), ("functions-o3", FsaStyle::Functions, 3), ("blocks-o3", FsaStyle::Blocks, 3)]
            {
                let cm = compile_fsa_module(&spec, style, level)?;
                let t = Instant::now();
                let mut total = ExecStats::default();
                for r in dslkit::batch::apply_batch(&cm, &spec.name, &words) {
                    total.add(&r?.stats);
                }
                out.push(record(config, &total, ms(cm.compile_time()), ms(t.elapsed())));
            }
        }
        Suite::Synth => {
            let score = synth::chord(n as u64);
            for (config, spec) in [("plain", false), ("specialized", true)] {
                let t = Instant::now();
                let r = render(&score, 3, spec)?;
                let total = ms(t.elapsed());
                let compile = ms(r.compile_time);
                out.push(record(config, &r.stats, compile, (total - compile).max(0.0)));
            }
        }
    }
    Ok(out)
}

/// The `k`-th word of a fixed sequence: `c`, the base-8 digits of `k`
/// mapped to letters (six of the eight to `a` or `d`), then `r`. Most are
/// in the cadr language.
fn nth_word(k: usize) -> Vec<String> {
    let mut w = vec!["c".to_string()];
    let mut x = k;
    while x > 0 {
        w.push(["a", "d", "a", "d", "a", "d", "c", "r"][x % 8].to_string());
        x /= 8;
    }
    w.push("r".into());
    w
}
