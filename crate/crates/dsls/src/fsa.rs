//! The automata DSL: finite-state machines over symbol sequences compiled
//! either to one function per state or to one function of labelled blocks.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use dslkit::exec::{CompiledModule, ExecError, HostValue};
use dslkit::hir::build::*;
use dslkit::hir::{HFunction, HModule, Stmt};
use dslkit::sexp::{self, Sexp};
use dslkit::HType;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub name: String,
    /// (input symbol, next state)
    pub transitions: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsaSpec {
    pub name: String,
    pub start: String,
    pub finals: BTreeSet<String>,
    pub states: Vec<State>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FsaStyle {
    /// One function per state; transitions are tail calls.
    #[default]
    Functions,
    /// One function with a label per state; transitions are jumps.
    Blocks,
}

impl fmt::Display for FsaStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FsaStyle::Functions => "functions",
            FsaStyle::Blocks => "blocks",
        })
    }
}

impl std::str::FromStr for FsaStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "functions" => Ok(FsaStyle::Functions),
            "blocks" => Ok(FsaStyle::Blocks),
            other => Err(format!("unknown style `{other}`; expected functions or blocks")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsaError {
    #[error("invalid automaton: {0}")]
    InvalidSpec(String),
    #[error("syntax: {0}")]
    Syntax(String),
}

impl FsaSpec {
    /// The machine for `c(a|d)*r`.
    pub fn cadr() -> FsaSpec {
        let t = |pairs: &[(&str, &str)]| pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        FsaSpec {
            name: "cadr".into(),
            start: "init".into(),
            finals: ["end".to_string()].into(),
            states: vec![
                State { name: "init".into(), transitions: t(&[("c", "more")]) },
                State { name: "more".into(), transitions: t(&[("a", "more"), ("d", "more"), ("r", "end")]) },
                State { name: "end".into(), transitions: vec![] },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), FsaError> {
        let bad = |m: String| Err(FsaError::InvalidSpec(m));
        let mut names = HashSet::new();
        for s in &self.states {
            if !names.insert(s.name.as_str()) {
                return bad(format!("state {} declared twice", s.name));
            }
        }
        if self.states.iter().any(|s| s.name == self.name) {
            return bad(format!("state {} has the machine's own name", self.name));
        }
        if !names.contains(self.start.as_str()) {
            return bad(format!("start state {} is not declared", self.start));
        }
        for f in &self.finals {
            if !names.contains(f.as_str()) {
                return bad(format!("final state {f} is not declared"));
            }
        }
        for s in &self.states {
            let mut inputs = HashSet::new();
            for (input, next) in &s.transitions {
                if !inputs.insert(input.as_str()) {
                    return bad(format!("state {} has two transitions on {input}", s.name));
                }
                if !names.contains(next.as_str()) {
                    return bad(format!("state {} moves to undeclared state {next}", s.name));
                }
            }
        }
        Ok(())
    }

    /// Reference semantics: runs the machine directly on the word.
    pub fn accepts<S: AsRef<str>>(&self, word: &[S]) -> bool {
        let mut cur = self.start.as_str();
        for w in word {
            let Some(s) = self.states.iter().find(|s| s.name == cur) else { return false };
            match s.transitions.iter().find(|(i, _)| i == w.as_ref()) {
                Some((_, next)) => cur = next,
                None => return false,
            }
        }
        self.finals.contains(cur)
    }
}

/// Reads `(fsa <name> <start> (<final>...) (<state> ((<input> <next>) ...)) ...)`.
pub fn parse_fsa(text: &str) -> Result<FsaSpec, FsaError> {
    let d = sexp::parse(text).map_err(|e| FsaError::Syntax(e.to_string()))?;
    let syntax = |m: &str| FsaError::Syntax(format!("{m} in {d}"));
    let items = d.as_list().ok_or_else(|| syntax("expected a list"))?;
    let [head, name, start, finals, states @ ..] = items else { return Err(syntax("expected (fsa name start (finals) states...)")) };
    if !head.is_symbol("fsa") {
        return Err(syntax("expected `fsa`"));
    }
    let sym = |s: &Sexp| s.as_symbol().map(str::to_string).ok_or_else(|| syntax(&format!("expected a symbol, got {s}")));
    let finals = finals.as_list().ok_or_else(|| syntax("expected a list of final states"))?;
    let mut spec = FsaSpec {
        name: sym(name)?,
        start: sym(start)?,
        finals: finals.iter().map(sym).collect::<Result<_, _>>()?,
        states: vec![],
    };
    for s in states {
        let Some([sname, Sexp::List(ts)]) = s.as_list() else { return Err(syntax("expected (state ((input next) ...))")) };
        let mut transitions = vec![];
        for t in ts {
            let Some([i, n]) = t.as_list() else { return Err(syntax("expected (input next)")) };
            transitions.push((sym(i)?, sym(n)?));
        }
        spec.states.push(State { name: sym(sname)?, transitions });
    }
    spec.validate()?;
    Ok(spec)
}

fn sym_ptr() -> HType {
    HType::ptr(HType::Sym)
}

fn is_final(spec: &FsaSpec, state: &str) -> Stmt {
    ret(boolean(spec.finals.contains(state)))
}

/// Compiles the machine. The entry function is named after the machine
/// and takes `(inp: ptr sym, len: i64)`, so callers may pass just the
/// symbol vector.
pub fn compile_fsa(spec: &FsaSpec, style: FsaStyle) -> Result<HModule, FsaError> {
    spec.validate()?;
    let mut m = HModule::new(spec.name.clone());
    let add = |m: &mut HModule, f: Result<HFunction, _>| {
        m.add(f.map_err(|e| FsaError::InvalidSpec(format!("{e}")))?).map_err(|e| FsaError::InvalidSpec(e.to_string()))
    };
    let params = || vec![("inp", sym_ptr()), ("len", HType::i64())];
    match style {
        FsaStyle::Functions => {
            let entry = ret(app(spec.start.clone(), vec![var("inp"), si64(0), var("len")]));
            add(&mut m, function(spec.name.clone(), params(), HType::HostBool, entry, &[]))?;
            for s in &spec.states {
                let cases = s
                    .transitions
                    .iter()
                    .map(|(i, n)| (sym(i.clone()), ret(app(n.clone(), vec![var("inp"), add1(var("pos")), var("len")]))))
                    .collect();
                let body = if_(
                    icmp_ult(var("pos"), var("len")),
                    switch(load(gep(var("inp"), vec![var("pos")])), cases, ret(boolean(false))),
                    is_final(spec, &s.name),
                );
                let ps = vec![("inp", sym_ptr()), ("pos", HType::i64()), ("len", HType::i64())];
                add(&mut m, function(s.name.clone(), ps, HType::HostBool, body, &[]))?;
            }
        }
        FsaStyle::Blocks => {
            // The start state comes first so control falls into it.
            let mut order: Vec<&State> = spec.states.iter().filter(|s| s.name == spec.start).collect();
            order.extend(spec.states.iter().filter(|s| s.name != spec.start));
            let labels = order
                .iter()
                .map(|s| {
                    let cases = s
                        .transitions
                        .iter()
                        .map(|(i, n)| (sym(i.clone()), block(vec![set("pos", add1(var("pos"))), jump(n.clone())])))
                        .collect();
                    label(
                        s.name.clone(),
                        if_(
                            icmp_ult(var("pos"), var("len")),
                            switch(load(gep(var("inp"), vec![var("pos")])), cases, ret(boolean(false))),
                            is_final(spec, &s.name),
                        ),
                    )
                })
                .collect();
            let body = expr_stmt(let_(vec![binding("pos", si64(0), HType::i64())], block(labels), i1(false)));
            add(&mut m, function(spec.name.clone(), params(), HType::HostBool, body, &[]))?;
        }
    }
    Ok(m)
}

/// Runs a compiled machine on a word.
pub fn fsa_match<S: AsRef<str>>(cm: &CompiledModule, name: &str, word: &[S]) -> Result<bool, ExecError> {
    let out = cm.apply(name, &[HostValue::symbols(word)])?;
    Ok(out.value == HostValue::Bool(true))
}

/// `more-0 .. more-(len-1)`, all always-inline: `more-i` reads element `i`
/// and moves on to `more-(i+1)` on `a` or `d`; the last one accepts on `r`.
/// Together they accept exactly `(a|d)^(len-1) r`.
pub fn build_more_chain(len: usize) -> Vec<HFunction> {
    assert!(len >= 1, "chain length must be at least 1");
    let name = |i: usize| format!("more-{i}");
    let params = || vec![("inp", sym_ptr())];
    let at = |i: usize| load(gep(var("inp"), vec![ui64(i as u64)]));
    let mut out = vec![function(
        name(len - 1),
        params(),
        HType::HostBool,
        switch(at(len - 1), vec![(sym("r"), ret(boolean(true)))], ret(boolean(false))),
        &["always-inline"],
    )
    .expect("one parameter")];
    for i in 0..len - 1 {
        let next = || ret(app(name(i + 1), vec![var("inp")]));
        let body = switch(at(i), vec![(sym("a"), next()), (sym("d"), next())], ret(boolean(false)));
        out.push(function(name(i), params(), HType::HostBool, body, &["always-inline"]).expect("one parameter"));
    }
    out
}

/// A module with the chain and a non-inlined entry `chain` that checks the
/// word length before entering `more-0`.
pub fn more_chain_module(len: usize) -> HModule {
    let mut m = HModule::new(format!("more-chain-{len}"));
    let entry = if_(
        icmp_eq(var("len"), si64(len as i64)),
        ret(app("more-0", vec![var("inp")])),
        ret(boolean(false)),
    );
    m.add(function("chain", vec![("inp", sym_ptr()), ("len", HType::i64())], HType::HostBool, entry, &[]).expect("distinct"))
        .expect("fresh module");
    for f in build_more_chain(len) {
        m.add(f).expect("distinct names");
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_semantics() {
        let s = FsaSpec::cadr();
        assert!(s.accepts(&["c", "a", "d", "r"]));
        assert!(s.accepts(&["c", "r"]));
        assert!(!s.accepts(&["c", "a", "d"]));
        assert!(!s.accepts::<&str>(&[]));
    }

    #[test]
    fn text_form() {
        let text = "(fsa cadr init (end) (init ((c more))) (more ((a more) (d more) (r end))) (end ()))";
        assert_eq!(parse_fsa(text).unwrap(), FsaSpec::cadr());
    }

    #[test]
    fn duplicate_input_rejected() {
        let text = "(fsa m s (s) (s ((a s) (a s))))";
        assert!(matches!(parse_fsa(text), Err(FsaError::InvalidSpec(_))));
    }

    #[test]
    fn undeclared_target_rejected() {
        let text = "(fsa m s (s) (s ((a t))))";
        assert!(matches!(parse_fsa(text), Err(FsaError::InvalidSpec(_))));
    }
}
