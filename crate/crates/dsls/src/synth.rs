//! The synth DSL: a score of sawtooth voices rendered into a preallocated
//! sample buffer, and a minimal WAV writer.
//!
//! Rendering is staged. The host validates the score and turns each voice
//! into literal bounds, frequencies and gains; the generated `fill`
//! function then computes every sample. The sample rate stays a parameter
//! of `fill` so it can either be passed at run time or fixed by
//! specialization together with the buffer address.

use std::io::{self, Write};
use std::path::Path;
use std::time::Duration;

use dslkit::exec::{compile_module, CompileError, ExecError, ExecStats, HostRegistry, HostValue};
use dslkit::hir::build::*;
use dslkit::hir::{Expr, Global, HFunction, HModule};
use dslkit::ops::CastKind;
use dslkit::opt::{Binding, PassConfig, Specialization};
use dslkit::sexp::{self, Sexp};
use dslkit::HType;
use thiserror::Error;

/// Name of the fill function and of the output buffer global.
pub const FILL: &str = "fill";
pub const BUFFER: &str = "out";

#[derive(Debug, Clone, PartialEq)]
pub struct Voice {
    pub freq: f32,
    pub start: u64,
    pub dur: u64,
    pub gain: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub rate: u32,
    pub length: u64,
    pub voices: Vec<Voice>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("syntax: {0}")]
    Syntax(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

impl Score {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidScore(m));
        if self.rate == 0 {
            return bad("sample rate must be positive".into());
        }
        if self.length > i32::MAX as u64 {
            return bad(format!("length {} does not fit a 32-bit sample index", self.length));
        }
        for (k, v) in self.voices.iter().enumerate() {
            if v.freq.is_nan() || v.freq <= 0.0 || v.freq > self.rate as f32 / 2.0 {
                return bad(format!("voice {k}: frequency {} must be in (0, rate/2]", v.freq));
            }
            if !(0.0..=1.0).contains(&v.gain) {
                return bad(format!("voice {k}: gain {} is outside [0, 1]", v.gain));
            }
            if v.dur > 0 && (v.start >= self.length || v.start + v.dur > self.length) {
                return bad(format!("voice {k}: samples {}..{} fall outside 0..{}", v.start, v.start + v.dur, self.length));
            }
        }
        Ok(())
    }
}

/// Reads `(score :rate <hz> :length <n> (voice :freq <hz> :start <n> :dur <n> :gain <g>) ...)`.
pub fn parse_score(text: &str) -> Result<Score, SynthError> {
    let d = sexp::parse(text).map_err(|e| SynthError::Syntax(e.to_string()))?;
    let items = d.as_list().filter(|l| l.first().is_some_and(|h| h.is_symbol("score"))).ok_or_else(|| {
        SynthError::Syntax("expected (score :rate <hz> :length <n> (voice ...) ...)".into())
    })?;
    let (opts, rest) = keywords(&items[1..]);
    let num = |opts: &[(&str, &Sexp)], key: &str| -> Result<f64, SynthError> {
        let v = opts.iter().find(|(k, _)| *k == key).ok_or_else(|| SynthError::Syntax(format!("missing :{key}")))?;
        v.1.as_f64().ok_or_else(|| SynthError::Syntax(format!(":{key} expects a number, got {}", v.1)))
    };
    let whole = |x: f64, key: &str| {
        if x >= 0.0 && x.fract() == 0.0 {
            Ok(x as u64)
        } else {
            Err(SynthError::InvalidScore(format!(":{key} must be a non-negative integer, got {x}")))
        }
    };
    let rate = whole(num(&opts, "rate")?, "rate")?;
    let mut score = Score {
        rate: u32::try_from(rate).map_err(|_| SynthError::InvalidScore(format!("rate {rate} is too large")))?,
        length: whole(num(&opts, "length")?, "length")?,
        voices: vec![],
    };
    for v in rest {
        let parts = v.as_list().filter(|l| l.first().is_some_and(|h| h.is_symbol("voice")));
        let parts = parts.ok_or_else(|| SynthError::Syntax(format!("expected (voice ...), got {v}")))?;
        let (vo, extra) = keywords(&parts[1..]);
        if let Some(x) = extra.first() {
            return Err(SynthError::Syntax(format!("unexpected {x} in voice")));
        }
        score.voices.push(Voice {
            freq: num(&vo, "freq")? as f32,
            start: whole(num(&vo, "start")?, "start")?,
            dur: whole(num(&vo, "dur")?, "dur")?,
            gain: num(&vo, "gain")? as f32,
        });
    }
    score.validate()?;
    Ok(score)
}

/// Splits leading `:key value` pairs from the remaining items.
fn keywords(items: &[Sexp]) -> (Vec<(&str, &Sexp)>, &[Sexp]) {
    let mut out = vec![];
    let mut i = 0;
    while i + 1 < items.len() {
        match items[i].as_symbol().and_then(|s| s.strip_prefix(':')) {
            Some(k) => out.push((k, &items[i + 1])),
            None => break,
        }
        i += 2;
    }
    (out, &items[i..])
}

/// A three-voice chord at 44.1 kHz over `length` samples.
pub fn chord(length: u64) -> Score {
    Score {
        rate: 44100,
        length,
        voices: vec![
            Voice { freq: 220.0, start: 0, dur: length, gain: 0.5 },
            Voice { freq: 277.2, start: length / 4, dur: length / 2, gain: 0.3 },
            Voice { freq: 329.6, start: length / 2, dur: length / 2, gain: 0.2 },
        ],
    }
}

/// The sawtooth wave at sample `x` (an i32 expression) for a literal
/// frequency, with `rate` an f32 expression.
pub fn sawtooth(freq: f32, x: Expr, rate: Expr) -> Expr {
    let period = || intrinsic("round.f32", vec![fdiv(rate.clone(), fl32(freq))]);
    let half = intrinsic("trunc.f32", vec![fdiv(period(), fl32(2.0))]);
    let xs = frem(cast(CastKind::UiToFp, x, HType::F32), period());
    fsub(fdiv(xs, half), fl32(1.0))
}

/// Builds the module: `fill(buf: ptr f32, len: i64, rate: f32)` writes the
/// mix of all voices into `buf[0..len)`, and the global `out` holds
/// `score.length` samples.
pub fn synth_build(score: &Score) -> Result<HModule, SynthError> {
    score.validate()?;
    let i = || var("i");
    let mut per_sample = vec![];
    for v in score.voices.iter().filter(|v| v.dur > 0) {
        let end = v.start + v.dur;
        let x = cast(CastKind::Trunc, sub(i(), si64(v.start as i64)), HType::Int(32));
        let active = and(icmp_uge(i(), si64(v.start as i64)), icmp_ult(i(), si64(end as i64)));
        let term = fmul(fl32(v.gain), sawtooth(v.freq, x, var("rate")));
        per_sample.push(if_(active, set("acc", fadd(var("acc"), term)), svoid()));
    }
    per_sample.push(store(var("acc"), gep(var("buf"), vec![i()])));
    let step = let_(vec![binding("acc", fl32(0.0), HType::F32)], block(per_sample), i1(false));
    let body = block(vec![
        expr_stmt(let_(
            vec![binding("i", si64(0), HType::i64())],
            while_(icmp_slt(i(), var("len")), block(vec![expr_stmt(step), set("i", add(i(), si64(1)))])),
            i1(false),
        )),
        ret_void(),
    ]);
    let params = vec![("buf", HType::ptr(HType::F32)), ("len", HType::i64()), ("rate", HType::F32)];
    let fill: HFunction = function(FILL, params, HType::Void, body, &[]).map_err(|e| SynthError::InvalidScore(e.to_string()))?;
    let mut m = HModule::new("synth");
    m.add(fill).map_err(|e| SynthError::InvalidScore(e.to_string()))?;
    m.add_global(Global { name: BUFFER.into(), ty: HType::array(HType::F32, score.length), init: vec![] })
        .map_err(|e| SynthError::InvalidScore(e.to_string()))?;
    Ok(m)
}

/// The specialization fixing rate, buffer and length to the score's.
pub fn fill_specialization(score: &Score) -> Specialization {
    Specialization::new(FILL)
        .bind("buf", Binding::StaticAddress { name: BUFFER.into(), elem: HType::F32, len: score.length })
        .bind("len", Binding::StaticValue(si64(score.length as i64)))
        .bind("rate", Binding::StaticValue(fl32(score.rate as f32)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub samples: Vec<f32>,
    pub stats: ExecStats,
    pub compile_time: Duration,
}

/// Compiles and runs the score. With `specialize` the rate and buffer are
/// fixed in a specialized copy of `fill` and the samples are read back
/// from the global; otherwise `fill` runs on a host vector.
pub fn render(score: &Score, opt_level: u8, specialize: bool) -> Result<Rendered, SynthError> {
    let m = synth_build(score)?;
    let mut cfg = PassConfig::level(opt_level);
    if specialize {
        cfg = cfg.specialize(fill_specialization(score));
    }
    let cm = compile_module(&m, &cfg, &HostRegistry::new())?;
    let (samples, stats) = if specialize {
        let name = format!("{FILL}@spec0");
        let out = cm.apply(&name, &[])?;
        (cm.read_global(BUFFER)?, out.stats)
    } else {
        let buf = HostValue::reals(std::iter::repeat_n(0.0, score.length as usize));
        let out = cm.apply(FILL, &[buf, HostValue::Real(score.rate as f64)])?;
        (out.args_after[0].clone(), out.stats)
    };
    Ok(Rendered { samples: to_samples(&samples)?, stats, compile_time: cm.compile_time() })
}

fn to_samples(v: &HostValue) -> Result<Vec<f32>, SynthError> {
    match v {
        HostValue::Vector(xs) => xs
            .iter()
            .map(|x| x.as_real().map(|r| r as f32))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| SynthError::Exec(ExecError::Unmarshal("buffer holds non-real samples".into()))),
        other => Err(SynthError::Exec(ExecError::Unmarshal(format!("expected a sample vector, got {other}")))),
    }
}

/// 16-bit PCM value for a sample: `round(s * 32767)`, clamped.
pub fn pcm16(s: f32) -> i16 {
    (s as f64 * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

/// A mono 16-bit PCM RIFF/WAVE image.
pub fn wav_bytes(samples: &[f32], rate: u32) -> Vec<u8> {
    let data_len = samples.len() as u32 * 2;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        out.extend_from_slice(&pcm16(s).to_le_bytes());
    }
    out
}

pub fn write_wav(samples: &[f32], rate: u32, path: &Path) -> io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&wav_bytes(samples, rate))?;
    f.flush()
}
