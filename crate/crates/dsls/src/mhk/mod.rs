//! Mini-Hakaru: a pure array-loop language, its rewrite passes and its
//! lowering to HIR.
//!
//! Programs are nodes of the `hakaru` grammar below, read from their
//! canonical s-expression form. Types are data: `nat`, `int`, `real`,
//! `(array T)`, `(const v)` (every element equals `v`) and `(pair A B)`.

mod anf;
mod lower;
mod rewrite;

use std::sync::{Arc, OnceLock};

use dslkit::astdef::{self, make_node, AstError, Child, Grammar, Node};
use dslkit::exec::{compile_module, CompileError, ExecError, ExecStats, HostRegistry, HostValue};
use dslkit::hir::HModule;
use dslkit::opt::PassConfig;
use dslkit::sexp::{self, Sexp};
use dslkit::HType;
use thiserror::Error;

pub use anf::{anf, is_atomic};
pub use lower::{lower_program, LowerOptions, MAIN};
pub use rewrite::{index_rules, index_rewrite};

pub const GRAMMAR: &str = "(define-ast hakaru
  (expr [val (type v)]
        [if (type tst:expr thn:expr els:expr)]
        [app (type rator:expr rands:expr ...)]
        [bucket (type s:expr e:expr r:reducer)]
        [match (type tst:expr branches:expr ...)]
        [branch (p:pat body:expr)]
        [intrf (sym)]
        [var (type sym info)]
        [for (type index lo:expr hi:expr body:expr)]
        [summate (type index lo:expr hi:expr body:expr)])
  (reducer [index (n:expr i:expr a:reducer)]
           [nop ()])
  (pat [pair (a:pat b:pat)]
       [pvar (sym)]))";

/// Divides every element of `a` by the sum of all elements.
pub const NORMALIZE_SRC: &str = "(mhk ((a (array real)))
  (for (array real) i (val nat 0) (app nat (intrf size) (var (array real) a ()))
    (app real (intrf /)
      (app real (intrf index) (var (array real) a ()) (var nat i ()))
      (summate real j (val nat 0) (app nat (intrf size) (var (array real) a ()))
        (app real (intrf index) (var (array real) a ()) (var nat j ()))))))";

/// The sum of `a` plus the sum of its squares, as two loops over the
/// same range.
pub const TWO_SUMS_SRC: &str = "(mhk ((a (array real)))
  (match real
    (summate real i (val nat 0) (app nat (intrf size) (var (array real) a ()))
      (app real (intrf index) (var (array real) a ()) (var nat i ())))
    (branch (pvar s1)
      (match real
        (summate real i (val nat 0) (app nat (intrf size) (var (array real) a ()))
          (app real (intrf *)
            (app real (intrf index) (var (array real) a ()) (var nat i ()))
            (app real (intrf index) (var (array real) a ()) (var nat i ()))))
        (branch (pvar s2)
          (app real (intrf +) (var real s1 ()) (var real s2 ())))))))";

pub fn grammar() -> &'static Arc<Grammar> {
    static G: OnceLock<Arc<Grammar>> = OnceLock::new();
    G.get_or_init(|| astdef::parse_grammar(GRAMMAR).expect("built-in grammar is valid"))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MhkError {
    #[error("syntax: {0}")]
    Syntax(String),
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("input: {0}")]
    Input(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MType {
    Nat,
    Int,
    Real,
    Array(Box<MType>),
    /// A scalar known to equal the given value.
    Const(Sexp),
    Pair(Box<MType>, Box<MType>),
}

impl MType {
    pub fn parse(d: &Sexp) -> Result<MType, MhkError> {
        let bad = || MhkError::Type(format!("unknown type {d}"));
        match d {
            Sexp::Symbol(s) => match s.as_str() {
                "nat" => Ok(MType::Nat),
                "int" => Ok(MType::Int),
                "real" => Ok(MType::Real),
                _ => Err(bad()),
            },
            Sexp::List(items) => match (items.first().and_then(Sexp::as_symbol), &items[1..]) {
                (Some("array"), [t]) => Ok(MType::Array(Box::new(MType::parse(t)?))),
                (Some("const"), [v @ (Sexp::Int(_) | Sexp::Float(_))]) => Ok(MType::Const(v.clone())),
                (Some("pair"), [a, b]) => Ok(MType::Pair(Box::new(MType::parse(a)?), Box::new(MType::parse(b)?))),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }

    pub fn to_sexp(&self) -> Sexp {
        match self {
            MType::Nat => Sexp::sym("nat"),
            MType::Int => Sexp::sym("int"),
            MType::Real => Sexp::sym("real"),
            MType::Array(t) => Sexp::list([Sexp::sym("array"), t.to_sexp()]),
            MType::Const(v) => Sexp::list([Sexp::sym("const"), v.clone()]),
            MType::Pair(a, b) => Sexp::list([Sexp::sym("pair"), a.to_sexp(), b.to_sexp()]),
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, MType::Real | MType::Const(Sexp::Float(_)))
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, MType::Nat | MType::Int | MType::Real | MType::Const(_))
    }

    /// The engine type of a scalar or of an array of scalars.
    pub fn hir(&self) -> Result<HType, MhkError> {
        Ok(match self {
            MType::Real => HType::F64,
            MType::Nat | MType::Int => HType::i64(),
            MType::Const(v) => {
                if matches!(v, Sexp::Float(_)) {
                    HType::F64
                } else {
                    HType::i64()
                }
            }
            MType::Array(e) if e.is_scalar() => HType::ptr(e.hir()?),
            other => return Err(MhkError::UnsupportedConstruct(format!("values of type {}", other.to_sexp()))),
        })
    }
}

/// The `type` field of an expression node.
pub fn type_of(n: &Node) -> Result<MType, MhkError> {
    let t = n.leaf("type").ok_or_else(|| MhkError::Type(format!("{} has no type", n.production())))?;
    MType::parse(t)
}

/// A program: declared inputs and a body.
#[derive(Debug, Clone, PartialEq)]
pub struct MhkProgram {
    pub params: Vec<(String, MType)>,
    pub body: Node,
}

impl MhkProgram {
    /// Reads `(mhk ((name type) ...) body)`.
    pub fn parse(text: &str) -> Result<MhkProgram, MhkError> {
        let d = sexp::parse(text).map_err(|e| MhkError::Syntax(e.to_string()))?;
        MhkProgram::from_sexp(&d)
    }

    pub fn from_sexp(d: &Sexp) -> Result<MhkProgram, MhkError> {
        let shape = || MhkError::Syntax("expected (mhk ((name type) ...) body)".into());
        let [head, params, body] = d.as_list().ok_or_else(shape)? else { return Err(shape()) };
        if !head.is_symbol("mhk") {
            return Err(shape());
        }
        let mut out = vec![];
        for p in params.as_list().ok_or_else(shape)? {
            let Some([Sexp::Symbol(n), t]) = p.as_list() else { return Err(shape()) };
            if n.starts_with('$') {
                return Err(MhkError::Syntax(format!("names starting with `$` are reserved: {n}")));
            }
            out.push((n.clone(), MType::parse(t)?));
        }
        Ok(MhkProgram { params: out, body: astdef::from_sexp(grammar(), body)? })
    }

    pub fn to_sexp(&self) -> Sexp {
        let params = self.params.iter().map(|(n, t)| Sexp::list([Sexp::sym(n), t.to_sexp()]));
        Sexp::list([Sexp::sym("mhk"), Sexp::list(params), astdef::to_sexp(&self.body)])
    }

    pub fn with_body(&self, body: Node) -> MhkProgram {
        MhkProgram { params: self.params.clone(), body }
    }
}

/// Reads an inputs file `((name value...) ...)`: one value for a scalar
/// parameter, any number of elements for an array.
pub fn parse_inputs(prog: &MhkProgram, text: &str) -> Result<Vec<HostValue>, MhkError> {
    let d = sexp::parse(text).map_err(|e| MhkError::Syntax(e.to_string()))?;
    let entries = d.as_list().ok_or_else(|| MhkError::Input("expected ((name value ...) ...)".into()))?;
    let mut out = vec![];
    for (name, t) in &prog.params {
        let e = entries
            .iter()
            .filter_map(Sexp::as_list)
            .find(|l| l.first().is_some_and(|h| h.is_symbol(name)))
            .ok_or_else(|| MhkError::Input(format!("no value for {name}")))?;
        let scalar = |v: &Sexp, t: &MType| -> Result<HostValue, MhkError> {
            match (t.is_real(), v) {
                (true, v) => v.as_f64().map(HostValue::Real),
                (false, Sexp::Int(i)) => i64::try_from(*i).ok().map(HostValue::Int),
                _ => None,
            }
            .ok_or_else(|| MhkError::Input(format!("{name}: {v} is not a {}", t.to_sexp())))
        };
        out.push(match t {
            MType::Array(elem) => HostValue::Vector(e[1..].iter().map(|v| scalar(v, elem)).collect::<Result<_, _>>()?),
            t => match &e[1..] {
                [v] => scalar(v, t)?,
                _ => return Err(MhkError::Input(format!("{name} expects one value"))),
            },
        });
    }
    Ok(out)
}

/// Options for the whole source-to-engine path.
#[derive(Debug, Clone, PartialEq)]
pub struct MhkOptions {
    pub fuse: bool,
    pub licm: bool,
    /// Runs the index rewrite and constant folding.
    pub fold: bool,
    pub opt_level: u8,
}

impl Default for MhkOptions {
    fn default() -> Self {
        MhkOptions { fuse: true, licm: true, fold: true, opt_level: 3 }
    }
}

impl MhkOptions {
    pub fn pass_config(&self) -> PassConfig {
        if self.licm && self.fold {
            return PassConfig::level(self.opt_level);
        }
        let hir: &[&str] = match self.opt_level {
            0 => &[],
            1 => &["const-fold", "dce"],
            2 => &["inline-always", "const-fold", "dce", "load-store-elim"],
            _ => &["inline-always", "const-fold", "licm", "const-fold", "dce", "load-store-elim"],
        };
        let names: Vec<&str> =
            hir.iter().copied().filter(|p| (self.licm || *p != "licm") && (self.fold || *p != "const-fold")).collect();
        PassConfig { opt_level: self.opt_level, ..PassConfig::with_passes(&names) }
    }
}

/// Rewrite (unless disabled), A-normalize and lower a program.
pub fn mhk_compile(prog: &MhkProgram, opts: &MhkOptions) -> Result<HModule, MhkError> {
    let mut body = prog.body.clone();
    if opts.fold {
        body = index_rewrite(&body)?;
    }
    let body = anf(&body)?;
    lower_program(&prog.with_body(body), &LowerOptions { fuse: opts.fuse })
}

/// Compiles and runs `main` on the inputs, in parameter order.
pub fn mhk_run(prog: &MhkProgram, inputs: &[HostValue], opts: &MhkOptions) -> Result<(HostValue, ExecStats), MhkError> {
    let m = mhk_compile(prog, opts)?;
    let cm = compile_module(&m, &opts.pass_config(), &HostRegistry::new())?;
    let out = cm.apply(MAIN, inputs)?;
    Ok((out.value, out.stats))
}

// Node constructors.

pub(crate) fn info() -> Child {
    Child::Leaf(Sexp::List(vec![]))
}

pub fn mk_val(t: &MType, v: Sexp) -> Node {
    make_node(grammar(), "val", vec![t.to_sexp().into(), v.into()]).expect("val shape")
}

pub fn mk_var(t: &MType, name: &str) -> Node {
    make_node(grammar(), "var", vec![t.to_sexp().into(), Sexp::sym(name).into(), info()]).expect("var shape")
}

pub fn mk_intrf(op: &str) -> Node {
    make_node(grammar(), "intrf", vec![Sexp::sym(op).into()]).expect("intrf shape")
}

pub fn mk_app(t: &MType, op: &str, rands: Vec<Node>) -> Node {
    make_node(grammar(), "app", vec![t.to_sexp().into(), mk_intrf(op).into(), rands.into()]).expect("app shape")
}

pub fn mk_if(t: &MType, tst: Node, thn: Node, els: Node) -> Node {
    make_node(grammar(), "if", vec![t.to_sexp().into(), tst.into(), thn.into(), els.into()]).expect("if shape")
}

/// `match tst (branch (pvar name) body)`: a single binding.
pub fn mk_let(t: &MType, name: &str, tst: Node, body: Node) -> Node {
    let g = grammar();
    let pvar = make_node(g, "pvar", vec![Sexp::sym(name).into()]).expect("pvar shape");
    let branch = make_node(g, "branch", vec![pvar.into(), body.into()]).expect("branch shape");
    make_node(g, "match", vec![t.to_sexp().into(), tst.into(), vec![branch].into()]).expect("match shape")
}

pub fn mk_loop(kind: &str, t: &MType, index: &str, lo: Node, hi: Node, body: Node) -> Node {
    make_node(grammar(), kind, vec![t.to_sexp().into(), Sexp::sym(index).into(), lo.into(), hi.into(), body.into()])
        .expect("loop shape")
}

/// Name bound by a `var`, `pvar` or loop node.
pub(crate) fn sym_of(n: &Node, field: &str) -> Result<String, MhkError> {
    n.leaf(field)
        .and_then(Sexp::as_symbol)
        .map(str::to_string)
        .ok_or_else(|| MhkError::Syntax(format!("{}: `{field}` must be a symbol", n.production())))
}

/// The operator symbol of an `app` whose rator is an `intrf`.
pub(crate) fn op_of(n: &Node) -> Option<&str> {
    let r = n.node("rator")?;
    if r.production() != "intrf" {
        return None;
    }
    r.leaf("sym")?.as_symbol()
}

/// Free variables of an expression.
pub fn free_vars(n: &Node) -> std::collections::BTreeSet<String> {
    let mut out = std::collections::BTreeSet::new();
    collect_free(n, &mut vec![], &mut out);
    out
}

fn pattern_vars(p: &Node, out: &mut Vec<String>) {
    match p.production() {
        "pvar" => out.extend(p.leaf("sym").and_then(Sexp::as_symbol).map(str::to_string)),
        _ => {
            for c in ["a", "b"] {
                if let Some(q) = p.node(c) {
                    pattern_vars(q, out);
                }
            }
        }
    }
}

fn collect_free(n: &Node, bound: &mut Vec<String>, out: &mut std::collections::BTreeSet<String>) {
    match n.production() {
        "var" => {
            if let Some(s) = n.leaf("sym").and_then(Sexp::as_symbol) {
                if !bound.iter().any(|b| b == s) {
                    out.insert(s.to_string());
                }
            }
        }
        "branch" => {
            let mut vs = vec![];
            if let Some(p) = n.node("p") {
                pattern_vars(p, &mut vs);
            }
            let k = bound.len();
            bound.extend(vs);
            if let Some(b) = n.node("body") {
                collect_free(b, bound, out);
            }
            bound.truncate(k);
        }
        "for" | "summate" => {
            for f in ["lo", "hi"] {
                if let Some(c) = n.node(f) {
                    collect_free(c, bound, out);
                }
            }
            let k = bound.len();
            bound.extend(n.leaf("index").and_then(Sexp::as_symbol).map(str::to_string));
            if let Some(b) = n.node("body") {
                collect_free(b, bound, out);
            }
            bound.truncate(k);
        }
        _ => {
            for (_, c) in n.fields() {
                each_node(c, &mut |c| collect_free(c, bound, out));
            }
        }
    }
}

fn each_node(c: &Child, f: &mut dyn FnMut(&Node)) {
    match c {
        Child::Node(n) => f(n),
        Child::List(items) => items.iter().for_each(|i| each_node(i, f)),
        Child::Leaf(_) => {}
    }
}
