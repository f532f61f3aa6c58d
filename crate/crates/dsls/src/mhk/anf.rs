use std::collections::BTreeSet;

use dslkit::astdef::{make_node, Child, Node};
use dslkit::sexp::Sexp;

use super::{grammar, mk_let, mk_var, type_of, MhkError};

/// `var` and `val` nodes (and bare operators) are atomic.
pub fn is_atomic(n: &Node) -> bool {
    matches!(n.production(), "var" | "val" | "intrf")
}

/// A-normal form: every `app` operand and every `if` test becomes atomic,
/// with the computations they stood for bound by single-branch `match`
/// nodes in evaluation order. Loop bounds are left alone.
pub fn anf(e: &Node) -> Result<Node, MhkError> {
    let mut names = Namer::new(e);
    names.term(e)
}

struct Namer {
    taken: BTreeSet<String>,
    next: usize,
}

type Bindings = Vec<(String, Node)>;

impl Namer {
    fn new(e: &Node) -> Namer {
        let mut taken = BTreeSet::new();
        collect_symbols(e, &mut taken);
        Namer { taken, next: 0 }
    }

    fn fresh(&mut self) -> String {
        loop {
            let n = format!("t{}", self.next);
            self.next += 1;
            if self.taken.insert(n.clone()) {
                return n;
            }
        }
    }

    fn term(&mut self, e: &Node) -> Result<Node, MhkError> {
        let (bs, mut body) = self.norm(e)?;
        for (name, init) in bs.into_iter().rev() {
            body = mk_let(&type_of(&body)?, &name, init, body);
        }
        Ok(body)
    }

    fn atomize(&mut self, e: &Node, bs: &mut Bindings) -> Result<Node, MhkError> {
        let (inner, r) = self.norm(e)?;
        bs.extend(inner);
        if is_atomic(&r) {
            return Ok(r);
        }
        let t = type_of(&r)?;
        let name = self.fresh();
        bs.push((name.clone(), r));
        Ok(mk_var(&t, &name))
    }

    fn norm(&mut self, e: &Node) -> Result<(Bindings, Node), MhkError> {
        let g = grammar();
        let field = |f: &str| e.field(f).cloned().ok_or_else(|| MhkError::Syntax(format!("{} without {f}", e.production())));
        let node = |f: &str| e.node(f).ok_or_else(|| MhkError::Syntax(format!("{} without {f}", e.production())));
        Ok(match e.production() {
            "app" => {
                let mut bs = vec![];
                let mut rands = vec![];
                for r in e.nodes("rands") {
                    rands.push(self.atomize(r, &mut bs)?);
                }
                (bs, make_node(g, "app", vec![field("type")?, field("rator")?, rands.into()])?)
            }
            "if" => {
                let mut bs = vec![];
                let tst = self.atomize(node("tst")?, &mut bs)?;
                let thn = self.term(node("thn")?)?;
                let els = self.term(node("els")?)?;
                (bs, make_node(g, "if", vec![field("type")?, tst.into(), thn.into(), els.into()])?)
            }
            "match" => {
                let tst = self.term(node("tst")?)?;
                let mut branches = vec![];
                for b in e.nodes("branches") {
                    let body = self.term(b.node("body").ok_or_else(|| MhkError::Syntax("branch without body".into()))?)?;
                    let p = b.field("p").cloned().ok_or_else(|| MhkError::Syntax("branch without pattern".into()))?;
                    branches.push(make_node(g, "branch", vec![p, body.into()])?);
                }
                (vec![], make_node(g, "match", vec![field("type")?, tst.into(), branches.into()])?)
            }
            "for" | "summate" => {
                let body = self.term(node("body")?)?;
                let fields = vec![field("type")?, field("index")?, field("lo")?, field("hi")?, body.into()];
                (vec![], make_node(g, e.production(), fields)?)
            }
            _ => (vec![], e.clone()),
        })
    }
}

fn collect_symbols(n: &Node, out: &mut BTreeSet<String>) {
    for (name, c) in n.fields() {
        collect_child(name, c, out);
    }
}

fn collect_child(name: &str, c: &Child, out: &mut BTreeSet<String>) {
    match c {
        Child::Node(n) => collect_symbols(n, out),
        Child::List(items) => items.iter().for_each(|i| collect_child(name, i, out)),
        Child::Leaf(Sexp::Symbol(s)) if matches!(name, "sym" | "index") => {
            out.insert(s.clone());
        }
        Child::Leaf(_) => {}
    }
}
