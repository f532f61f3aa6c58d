//! Optimization passes over HIR and LIR, and the opt-level pipeline.

mod dce;
mod fold;
mod inline;
mod licm;
mod lse;
mod specialize;
mod util;

use std::fmt;

use thiserror::Error;

pub use dce::{dce_function_lir, dce_module, dce_module_lir};
pub use fold::{fold_function, fold_function_lir, fold_module, fold_module_lir, strip_nuw};
pub use inline::{inline_always, InlineCycle};
pub use licm::{licm_function, licm_module};
pub use lse::{lse_function, lse_module};
pub use specialize::{specialize, unroll_loops, Binding, SpecializeError, Specialization, UNROLL_LIMIT};
pub use util::{free_vars_expr, free_vars_stmt, is_speculatable, substitute};

use crate::hir::{typecheck_module, HModule, TypeError};
use crate::lir::{static_instr_count, verify, LModule, VerifyError};
use crate::lower::{lower_module, LowerError};

/// Pass names accepted in an explicit pass list.
pub const PASS_NAMES: &[&str] = &["const-fold", "dce", "inline-always", "licm", "load-store-elim"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PassConfig {
    pub opt_level: u8,
    /// When set, exactly these passes run, in order, instead of the level's
    /// pipeline. HIR-level passes run before lowering and LIR-level passes
    /// after, each group in list order.
    pub passes: Option<Vec<String>>,
    pub specializations: Vec<Specialization>,
}

impl PassConfig {
    pub fn level(opt_level: u8) -> PassConfig {
        PassConfig { opt_level, ..Default::default() }
    }

    pub fn with_passes<S: AsRef<str>>(passes: &[S]) -> PassConfig {
        PassConfig { passes: Some(passes.iter().map(|p| p.as_ref().to_string()).collect()), ..Default::default() }
    }

    pub fn specialize(mut self, s: Specialization) -> PassConfig {
        self.specializations.push(s);
        self
    }

    /// (HIR passes, LIR passes) for this configuration.
    pub fn schedule(&self) -> Result<(Vec<String>, Vec<String>), PipelineError> {
        let names: Vec<String> = match &self.passes {
            Some(p) => {
                for n in p {
                    if !PASS_NAMES.contains(&n.as_str()) {
                        return Err(PipelineError::UnknownPass(n.clone()));
                    }
                }
                p.clone()
            }
            None => {
                let (h, l): (&[&str], &[&str]) = match self.opt_level {
                    0 => (&[], &[]),
                    1 => (&["const-fold", "dce"], &["const-fold", "dce"]),
                    2 => (&["inline-always", "const-fold", "dce"], &["load-store-elim", "const-fold", "dce"]),
                    3 => (
                        &["inline-always", "const-fold", "licm", "const-fold", "dce"],
                        &["load-store-elim", "const-fold", "dce"],
                    ),
                    n => return Err(PipelineError::BadOptLevel(n)),
                };
                return Ok((h.iter().map(|s| s.to_string()).collect(), l.iter().map(|s| s.to_string()).collect()));
            }
        };
        let hir = names.iter().filter(|n| is_hir_pass(n)).cloned().collect();
        let lir = names.iter().filter(|n| is_lir_pass(n)).cloned().collect();
        Ok((hir, lir))
    }
}

fn is_hir_pass(n: &str) -> bool {
    matches!(n, "const-fold" | "dce" | "inline-always" | "licm")
}

fn is_lir_pass(n: &str) -> bool {
    matches!(n, "const-fold" | "dce" | "load-store-elim")
}

/// Static instruction counts around one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassStat {
    pub pass: String,
    /// `hir` or `lir`.
    pub level: &'static str,
    pub before: usize,
    pub after: usize,
}

impl fmt::Display for PassStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pass={} before={} after={}", self.pass, self.before, self.after)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("type errors: {}", join(.0))]
    Type(Vec<TypeError>),
    #[error("after pass {pass}: type errors: {}", join(.errors))]
    PassBrokeTypes { pass: String, errors: Vec<TypeError> },
    #[error("after pass {pass}: verification failed: {}", join(.errors))]
    PassBrokeVerify { pass: String, errors: Vec<VerifyError> },
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error(transparent)]
    Inline(#[from] InlineCycle),
    #[error(transparent)]
    Specialize(#[from] SpecializeError),
    #[error("unknown pass {0}")]
    UnknownPass(String),
    #[error("opt level {0} is not in 0..=3")]
    BadOptLevel(u8),
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// Output of the pipeline: the optimized HIR, the optimized LIR and one
/// stat line per pass that ran.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub hir: HModule,
    pub lir: LModule,
    pub stats: Vec<PassStat>,
    /// Names of functions created by specialization, in request order.
    pub specialized: Vec<String>,
}

fn lir_size(m: &LModule) -> usize {
    let c = static_instr_count(m);
    c.total + c.terminators
}

fn hir_size(m: &HModule) -> Result<usize, PipelineError> {
    Ok(lower_module(m).map(|l| lir_size(&l))?)
}

pub fn apply_hir_pass(name: &str, m: &HModule) -> Result<HModule, PipelineError> {
    Ok(match name {
        "const-fold" => fold_module(m),
        "dce" => dce_module(m),
        "inline-always" => inline_always(m)?,
        "licm" => licm_module(m),
        other => return Err(PipelineError::UnknownPass(other.to_string())),
    })
}

pub fn apply_lir_pass(name: &str, m: &LModule) -> Result<LModule, PipelineError> {
    Ok(match name {
        "const-fold" => fold_module_lir(m),
        "dce" => dce_module_lir(m),
        "load-store-elim" => lse_module(m),
        other => return Err(PipelineError::UnknownPass(other.to_string())),
    })
}

/// Type checks, specializes, runs the HIR passes, lowers and runs the LIR
/// passes. The module is re-checked after every HIR pass and verified
/// after every LIR pass.
pub fn run_pipeline(m: &HModule, cfg: &PassConfig) -> Result<PipelineOutput, PipelineError> {
    let (hir_passes, lir_passes) = cfg.schedule()?;
    let mut h = typecheck_module(m).map_err(PipelineError::Type)?;
    let mut stats = vec![];
    let mut specialized = vec![];
    for s in &cfg.specializations {
        let before = hir_size(&h)?;
        let (next, name) = specialize(&h, s)?;
        h = typecheck_module(&next)
            .map_err(|errors| PipelineError::PassBrokeTypes { pass: "specialize".into(), errors })?;
        stats.push(PassStat { pass: "specialize".into(), level: "hir", before, after: hir_size(&h)? });
        specialized.push(name);
    }
    for p in &hir_passes {
        let before = hir_size(&h)?;
        let next = apply_hir_pass(p, &h)?;
        h = typecheck_module(&next).map_err(|errors| PipelineError::PassBrokeTypes { pass: p.clone(), errors })?;
        stats.push(PassStat { pass: p.clone(), level: "hir", before, after: hir_size(&h)? });
    }
    let mut l = lower_module(&h)?;
    verify(&l).map_err(|errors| PipelineError::PassBrokeVerify { pass: "lower".into(), errors })?;
    if cfg.opt_level >= 1 {
        l = strip_nuw(&l);
    }
    for p in &lir_passes {
        let before = lir_size(&l);
        l = apply_lir_pass(p, &l)?;
        verify(&l).map_err(|errors| PipelineError::PassBrokeVerify { pass: p.clone(), errors })?;
        stats.push(PassStat { pass: p.clone(), level: "lir", before, after: lir_size(&l) });
    }
    Ok(PipelineOutput { hir: h, lir: l, stats, specialized })
}
