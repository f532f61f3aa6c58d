//! Grammar-driven ASTs.
//!
//! A [`Grammar`] is a runtime value describing groups of productions. Nodes
//! are built through [`make_node`], which checks every field against its
//! production pattern, and are traversed with the generic
//! [`map_children`] combinator and the rewriting drivers built on it.
//!
//! Canonical text form of a node is `(production child ...)`. Fields appear
//! in declaration order. A production's single variable-length field is
//! spliced inline; when a production has more than one, each of them is
//! wrapped in its own parenthesized list so the reader can split them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::sexp::{self, Sexp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    /// A group name, a production name, or `group.production`.
    Single(String),
    Repeat(Box<Pattern>),
    /// Fixed-length heterogeneous sequence.
    Multiple(Vec<Pattern>),
    Terminal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldPattern {
    pub name: String,
    pub pattern: Pattern,
}

impl FieldPattern {
    pub fn new(name: impl Into<String>, pattern: Pattern) -> Self {
        FieldPattern { name: name.into(), pattern }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub name: String,
    pub fields: Vec<FieldPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    pub productions: Vec<Production>,
}

/// Structured, not yet validated, grammar description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarSpec {
    pub name: String,
    pub groups: Vec<Group>,
}

pub type TerminalPredicate = fn(&Sexp) -> bool;

/// Registry of terminal predicates available to grammars.
#[derive(Clone)]
pub struct Predicates {
    table: BTreeMap<String, TerminalPredicate>,
}

impl Predicates {
    /// `number?`, `symbol?`, `string?`, `boolean?` and the catch-all `datum?`.
    pub fn standard() -> Self {
        let mut table: BTreeMap<String, TerminalPredicate> = BTreeMap::new();
        table.insert("number?".into(), |v| matches!(v, Sexp::Int(_) | Sexp::Float(_)));
        table.insert("symbol?".into(), |v| matches!(v, Sexp::Symbol(_)));
        table.insert("string?".into(), |v| matches!(v, Sexp::Str(_)));
        table.insert("boolean?".into(), |v| matches!(v, Sexp::Bool(_)));
        table.insert("datum?".into(), |_| true);
        Predicates { table }
    }

    pub fn register(&mut self, name: impl Into<String>, pred: TerminalPredicate) -> &mut Self {
        self.table.insert(name.into(), pred);
        self
    }

    pub fn get(&self, name: &str) -> Option<TerminalPredicate> {
        self.table.get(name).copied()
    }
}

impl Default for Predicates {
    fn default() -> Self {
        Self::standard()
    }
}

impl fmt::Debug for Predicates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.table.keys()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Group(usize),
    Production(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstError {
    #[error("dangling reference `{0}`")]
    DanglingReference(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown terminal predicate `{0}`")]
    UnknownTerminalPredicate(String),
    #[error("group `{0}` has no productions")]
    EmptyGroup(String),
    #[error("unknown production `{0}`")]
    UnknownProduction(String),
    #[error("production `{production}` expects {expected} fields, got {found}")]
    ArityMismatch { production: String, expected: usize, found: usize },
    #[error("field `{field}`: terminal predicate rejected {value}")]
    TerminalPredicateFailed { field: String, value: String },
    #[error("field `{field}`: expected {expected}")]
    ShapeMismatch { field: String, expected: String },
    #[error("rewrite produced `{found}` where {expected} was required")]
    ResultShapeMismatch { expected: String, found: String },
    #[error("malformed grammar text: {0}")]
    Syntax(String),
    #[error(transparent)]
    Read(#[from] sexp::ParseError),
}

/// A validated grammar. Immutable once defined.
#[derive(Debug)]
pub struct Grammar {
    name: String,
    groups: Vec<Group>,
    predicates: Predicates,
    productions: HashMap<String, (usize, usize)>,
    group_index: HashMap<String, usize>,
}

impl Grammar {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn production_count(&self) -> usize {
        self.productions.len()
    }

    pub fn production(&self, name: &str) -> Option<&Production> {
        let &(g, p) = self.productions.get(name)?;
        Some(&self.groups[g].productions[p])
    }

    /// Group owning a production.
    pub fn group_of(&self, production: &str) -> Option<&str> {
        let &(g, _) = self.productions.get(production)?;
        Some(&self.groups[g].name)
    }

    fn resolve(&self, reference: &str) -> Option<Target> {
        if let Some((g, p)) = reference.split_once('.') {
            let gi = *self.group_index.get(g)?;
            let pi = self.groups[gi].productions.iter().position(|x| x.name == p)?;
            return Some(Target::Production(gi, pi));
        }
        if let Some(&gi) = self.group_index.get(reference) {
            return Some(Target::Group(gi));
        }
        self.productions.get(reference).map(|&(g, p)| Target::Production(g, p))
    }
}

/// Validates a structured grammar description against the standard predicates.
pub fn define_grammar(spec: GrammarSpec) -> Result<Arc<Grammar>, AstError> {
    define_grammar_with(spec, Predicates::standard())
}

pub fn define_grammar_with(spec: GrammarSpec, predicates: Predicates) -> Result<Arc<Grammar>, AstError> {
    let mut productions = HashMap::new();
    let mut group_index = HashMap::new();
    for (gi, group) in spec.groups.iter().enumerate() {
        if group_index.insert(group.name.clone(), gi).is_some() {
            return Err(AstError::DuplicateName(group.name.clone()));
        }
        if group.productions.is_empty() {
            return Err(AstError::EmptyGroup(group.name.clone()));
        }
    }
    for (gi, group) in spec.groups.iter().enumerate() {
        for (pi, prod) in group.productions.iter().enumerate() {
            if group_index.contains_key(&prod.name) || productions.insert(prod.name.clone(), (gi, pi)).is_some() {
                return Err(AstError::DuplicateName(prod.name.clone()));
            }
            let mut seen = std::collections::HashSet::new();
            for field in &prod.fields {
                if !seen.insert(field.name.as_str()) {
                    return Err(AstError::DuplicateName(format!("{}.{}", prod.name, field.name)));
                }
            }
        }
    }
    let grammar = Grammar { name: spec.name, groups: spec.groups, predicates, productions, group_index };
    for group in &grammar.groups {
        for prod in &group.productions {
            for field in &prod.fields {
                check_pattern(&grammar, &field.pattern)?;
            }
        }
    }
    Ok(Arc::new(grammar))
}

fn check_pattern(g: &Grammar, p: &Pattern) -> Result<(), AstError> {
    match p {
        Pattern::Single(r) => g.resolve(r).map(|_| ()).ok_or_else(|| AstError::DanglingReference(r.clone())),
        Pattern::Repeat(inner) => check_pattern(g, inner),
        Pattern::Multiple(items) => items.iter().try_for_each(|i| check_pattern(g, i)),
        Pattern::Terminal(pred) => {
            g.predicates.get(pred).map(|_| ()).ok_or_else(|| AstError::UnknownTerminalPredicate(pred.clone()))
        }
    }
}

/// A field value of a node.
#[derive(Debug, Clone, PartialEq)]
pub enum Child {
    Node(Node),
    Leaf(Sexp),
    List(Vec<Child>),
}

impl Child {
    pub fn as_node(&self) -> Option<&Node> {
        match self {
            Child::Node(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_leaf(&self) -> Option<&Sexp> {
        match self {
            Child::Leaf(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Child]> {
        match self {
            Child::List(items) => Some(items),
            _ => None,
        }
    }
}

impl From<Node> for Child {
    fn from(n: Node) -> Self {
        Child::Node(n)
    }
}

impl From<Sexp> for Child {
    fn from(v: Sexp) -> Self {
        Child::Leaf(v)
    }
}

impl From<Vec<Node>> for Child {
    fn from(v: Vec<Node>) -> Self {
        Child::List(v.into_iter().map(Child::Node).collect())
    }
}

struct NodeData {
    grammar: Arc<Grammar>,
    group: usize,
    production: usize,
    fields: Vec<Child>,
}

/// An immutable, shape-checked AST node. Cloning is cheap.
#[derive(Clone)]
pub struct Node(Arc<NodeData>);

impl Node {
    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.0.grammar
    }

    pub fn production(&self) -> &str {
        &self.prod_def().name
    }

    pub fn group(&self) -> &str {
        &self.0.grammar.groups[self.0.group].name
    }

    fn prod_def(&self) -> &Production {
        &self.0.grammar.groups[self.0.group].productions[self.0.production]
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &Child)> {
        self.prod_def().fields.iter().map(|f| f.name.as_str()).zip(self.0.fields.iter())
    }

    pub fn children(&self) -> &[Child] {
        &self.0.fields
    }

    pub fn field(&self, name: &str) -> Option<&Child> {
        let idx = self.prod_def().fields.iter().position(|f| f.name == name)?;
        self.0.fields.get(idx)
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.field(name)?.as_node()
    }

    pub fn leaf(&self, name: &str) -> Option<&Sexp> {
        self.field(name)?.as_leaf()
    }

    pub fn list(&self, name: &str) -> Option<&[Child]> {
        self.field(name)?.as_list()
    }

    /// Nodes of a repeated field, skipping non-node entries.
    pub fn nodes(&self, name: &str) -> Vec<&Node> {
        self.list(name).map(|l| l.iter().filter_map(Child::as_node).collect()).unwrap_or_default()
    }

    /// Identity of the underlying allocation, stable for the node's lifetime.
    pub fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as *const () as usize
    }

    pub fn ptr_eq(&self, other: &Node) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// Total number of nodes in this tree.
    pub fn size(&self) -> usize {
        fn child_size(c: &Child) -> usize {
            match c {
                Child::Node(n) => n.size(),
                Child::Leaf(_) => 0,
                Child::List(items) => items.iter().map(child_size).sum(),
            }
        }
        1 + self.0.fields.iter().map(child_size).sum::<usize>()
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.grammar.name == other.0.grammar.name
                && self.production() == other.production()
                && self.0.fields == other.0.fields)
    }
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

fn describe_target(g: &Grammar, t: Target) -> String {
    match t {
        Target::Group(gi) => format!("a node of group `{}`", g.groups[gi].name),
        Target::Production(gi, pi) => format!("a `{}` node", g.groups[gi].productions[pi].name),
    }
}

fn node_matches(g: &Arc<Grammar>, t: Target, n: &Node) -> bool {
    if !(Arc::ptr_eq(g, &n.0.grammar) || g.name == n.0.grammar.name) {
        return false;
    }
    match t {
        Target::Group(gi) => n.0.group == gi,
        Target::Production(gi, pi) => n.0.group == gi && n.0.production == pi,
    }
}

fn check_child(g: &Arc<Grammar>, field: &str, p: &Pattern, c: &Child) -> Result<(), AstError> {
    match (p, c) {
        (Pattern::Single(r), Child::Node(n)) => {
            let t = g.resolve(r).ok_or_else(|| AstError::DanglingReference(r.clone()))?;
            if node_matches(g, t, n) {
                Ok(())
            } else {
                Err(AstError::ShapeMismatch {
                    field: field.into(),
                    expected: format!("{}, found `{}`", describe_target(g, t), n.production()),
                })
            }
        }
        (Pattern::Terminal(pred), Child::Leaf(v)) => {
            let f = g.predicates.get(pred).ok_or_else(|| AstError::UnknownTerminalPredicate(pred.clone()))?;
            if f(v) {
                Ok(())
            } else {
                Err(AstError::TerminalPredicateFailed { field: field.into(), value: v.to_string() })
            }
        }
        (Pattern::Repeat(inner), Child::List(items)) => {
            items.iter().try_for_each(|i| check_child(g, field, inner, i))
        }
        (Pattern::Multiple(ps), Child::List(items)) if ps.len() == items.len() => {
            ps.iter().zip(items).try_for_each(|(p, i)| check_child(g, field, p, i))
        }
        (Pattern::Multiple(ps), _) => Err(AstError::ShapeMismatch {
            field: field.into(),
            expected: format!("a sequence of {} elements", ps.len()),
        }),
        (Pattern::Single(r), _) => Err(AstError::ShapeMismatch {
            field: field.into(),
            expected: match g.resolve(r) {
                Some(t) => describe_target(g, t),
                None => format!("a `{r}` node"),
            },
        }),
        (Pattern::Terminal(pred), _) => {
            Err(AstError::ShapeMismatch { field: field.into(), expected: format!("a leaf satisfying {pred}") })
        }
        (Pattern::Repeat(_), _) => Err(AstError::ShapeMismatch { field: field.into(), expected: "a list".into() }),
    }
}

/// Builds a node, checking `fields` (one child per declared field) against
/// the production pattern.
pub fn make_node(g: &Arc<Grammar>, production: &str, fields: Vec<Child>) -> Result<Node, AstError> {
    let &(gi, pi) = g.productions.get(production).ok_or_else(|| AstError::UnknownProduction(production.into()))?;
    let def = &g.groups[gi].productions[pi];
    if def.fields.len() != fields.len() {
        return Err(AstError::ArityMismatch {
            production: production.into(),
            expected: def.fields.len(),
            found: fields.len(),
        });
    }
    for (fp, c) in def.fields.iter().zip(&fields) {
        check_child(g, &fp.name, &fp.pattern, c)?;
    }
    Ok(Node(Arc::new(NodeData { grammar: g.clone(), group: gi, production: pi, fields })))
}

fn map_child<E>(c: &Child, f: &mut impl FnMut(&Node) -> Result<Node, E>) -> Result<Child, E> {
    Ok(match c {
        Child::Node(n) => Child::Node(f(n)?),
        Child::Leaf(v) => Child::Leaf(v.clone()),
        Child::List(items) => Child::List(items.iter().map(|i| map_child(i, f)).collect::<Result<_, E>>()?),
    })
}

/// Fallible form of [`map_children`]. `f`'s own errors pass through untouched.
pub fn try_map_children<E: From<AstError>>(
    node: &Node,
    mut f: impl FnMut(&Node) -> Result<Node, E>,
) -> Result<Node, E> {
    let new_fields = node.0.fields.iter().map(|c| map_child(c, &mut f)).collect::<Result<Vec<_>, E>>()?;
    let def = node.prod_def();
    for (fp, c) in def.fields.iter().zip(&new_fields) {
        check_child(&node.0.grammar, &fp.name, &fp.pattern, c).map_err(|e| {
            E::from(match e {
                AstError::ShapeMismatch { field, expected } => {
                    AstError::ResultShapeMismatch { expected: format!("{expected} in field `{field}`"), found: field }
                }
                other => other,
            })
        })?;
    }
    Ok(Node(Arc::new(NodeData {
        grammar: node.0.grammar.clone(),
        group: node.0.group,
        production: node.0.production,
        fields: new_fields,
    })))
}

/// Applies `f` to every node-valued child (list fields elementwise) and
/// rebuilds the node with the same production. Leaves are untouched.
pub fn map_children(node: &Node, mut f: impl FnMut(&Node) -> Node) -> Result<Node, AstError> {
    try_map_children::<AstError>(node, |n| Ok(f(n)))
}

/// A partial rewrite rule: `None` means "does not apply".
pub type Rule<'a> = Box<dyn Fn(&Node) -> Option<Node> + 'a>;

fn first_match(rules: &[Rule<'_>], node: &Node) -> Result<Option<Node>, AstError> {
    for rule in rules {
        if let Some(out) = rule(node) {
            if out.0.group != node.0.group || out.0.grammar.name != node.0.grammar.name {
                return Err(AstError::ResultShapeMismatch {
                    expected: format!("a node of group `{}`", node.group()),
                    found: out.production().to_string(),
                });
            }
            return Ok(Some(out));
        }
    }
    Ok(None)
}

/// Post-order single pass: children first, then the first matching rule
/// fires once on the rebuilt node. No fixpoint iteration.
pub fn rewrite_bottom_up(rules: &[Rule<'_>], node: &Node) -> Result<Node, AstError> {
    let rebuilt = try_map_children(node, |c| rewrite_bottom_up(rules, c))?;
    Ok(first_match(rules, &rebuilt)?.unwrap_or(rebuilt))
}

/// Pre-order single pass: the first matching rule fires once on a node, then
/// the traversal continues into the children of the result.
pub fn rewrite_top_down(rules: &[Rule<'_>], node: &Node) -> Result<Node, AstError> {
    let here = first_match(rules, node)?.unwrap_or_else(|| node.clone());
    try_map_children(&here, |c| rewrite_top_down(rules, c))
}

// ---------------------------------------------------------------------------
// Canonical text form.

fn emitted_width(p: &Pattern) -> usize {
    match p {
        Pattern::Single(_) | Pattern::Terminal(_) | Pattern::Repeat(_) => 1,
        Pattern::Multiple(items) => items.iter().map(emitted_width).sum(),
    }
}

/// Index of the field whose repeat is spliced inline, if any.
fn spliced_field(def: &Production) -> Option<usize> {
    let mut repeats = def.fields.iter().enumerate().filter(|(_, f)| matches!(f.pattern, Pattern::Repeat(_)));
    let (idx, field) = repeats.next()?;
    if repeats.next().is_some() {
        return None;
    }
    match &field.pattern {
        Pattern::Repeat(inner) if emitted_width(inner) > 0 => Some(idx),
        _ => None,
    }
}

fn emit(p: &Pattern, c: &Child, out: &mut Vec<Sexp>) {
    match (p, c) {
        (Pattern::Single(_), Child::Node(n)) => out.push(to_sexp(n)),
        (Pattern::Terminal(_), Child::Leaf(v)) => out.push(v.clone()),
        (Pattern::Repeat(inner), Child::List(items)) => {
            let mut wrapped = Vec::new();
            for i in items {
                emit(inner, i, &mut wrapped);
            }
            out.push(Sexp::List(wrapped));
        }
        (Pattern::Multiple(ps), Child::List(items)) => {
            for (p, i) in ps.iter().zip(items) {
                emit(p, i, out);
            }
        }
        // Unreachable for nodes built through make_node.
        _ => out.push(Sexp::sym("?")),
    }
}

/// Converts a node to its canonical s-expression.
pub fn to_sexp(node: &Node) -> Sexp {
    let def = node.prod_def();
    let splice = spliced_field(def);
    let mut out = vec![Sexp::sym(&def.name)];
    for (i, (fp, c)) in def.fields.iter().zip(&node.0.fields).enumerate() {
        match (&fp.pattern, c) {
            (Pattern::Repeat(inner), Child::List(items)) if splice == Some(i) => {
                for item in items {
                    emit(inner, item, &mut out);
                }
            }
            _ => emit(&fp.pattern, c, &mut out),
        }
    }
    Sexp::List(out)
}

pub fn pretty_print(node: &Node) -> String {
    to_sexp(node).to_string()
}

fn syntax(msg: impl Into<String>) -> AstError {
    AstError::Syntax(msg.into())
}

fn read_pattern(g: &Arc<Grammar>, field: &str, p: &Pattern, toks: &[Sexp]) -> Result<Child, AstError> {
    match p {
        Pattern::Single(r) => {
            let n = from_sexp(g, &toks[0])?;
            check_child(g, field, p, &Child::Node(n.clone()))?;
            let _ = r;
            Ok(Child::Node(n))
        }
        Pattern::Terminal(_) => {
            let c = Child::Leaf(toks[0].clone());
            check_child(g, field, p, &c)?;
            Ok(c)
        }
        Pattern::Repeat(inner) => {
            let items = toks[0].as_list().ok_or_else(|| syntax(format!("field `{field}`: expected a list")))?;
            read_repeat(g, field, inner, items)
        }
        Pattern::Multiple(ps) => {
            let mut at = 0;
            let mut items = Vec::new();
            for p in ps {
                let w = emitted_width(p);
                items.push(read_pattern(g, field, p, &toks[at..at + w])?);
                at += w;
            }
            Ok(Child::List(items))
        }
    }
}

fn read_repeat(g: &Arc<Grammar>, field: &str, inner: &Pattern, toks: &[Sexp]) -> Result<Child, AstError> {
    let w = emitted_width(inner);
    if w == 0 {
        if toks.is_empty() {
            return Ok(Child::List(Vec::new()));
        }
        return Err(syntax(format!("field `{field}`: zero-width repeat cannot hold elements")));
    }
    if !toks.len().is_multiple_of(w) {
        return Err(syntax(format!("field `{field}`: {} tokens do not split into groups of {w}", toks.len())));
    }
    toks.chunks(w).map(|chunk| read_pattern(g, field, inner, chunk)).collect::<Result<_, _>>().map(Child::List)
}

/// Reads a node from its canonical s-expression.
pub fn from_sexp(g: &Arc<Grammar>, d: &Sexp) -> Result<Node, AstError> {
    let items = d.as_list().ok_or_else(|| syntax(format!("expected a node form, got {d}")))?;
    let head = items.first().and_then(Sexp::as_symbol).ok_or_else(|| syntax(format!("node form without a head: {d}")))?;
    let def = g.production(head).ok_or_else(|| AstError::UnknownProduction(head.into()))?;
    let toks = &items[1..];
    let splice = spliced_field(def);
    let fixed: usize = def.fields.iter().enumerate().filter(|(i, _)| Some(*i) != splice).map(|(_, f)| emitted_width(&f.pattern)).sum();
    if toks.len() < fixed || (splice.is_none() && toks.len() != fixed) {
        return Err(AstError::ArityMismatch { production: head.into(), expected: fixed, found: toks.len() });
    }
    let mut at = 0;
    let mut fields = Vec::with_capacity(def.fields.len());
    for (i, fp) in def.fields.iter().enumerate() {
        if Some(i) == splice {
            let n = toks.len() - fixed;
            let Pattern::Repeat(inner) = &fp.pattern else { unreachable!() };
            fields.push(read_repeat(g, &fp.name, inner, &toks[at..at + n])?);
            at += n;
        } else {
            let w = emitted_width(&fp.pattern);
            fields.push(read_pattern(g, &fp.name, &fp.pattern, &toks[at..at + w])?);
            at += w;
        }
    }
    make_node(g, head, fields)
}

pub fn read_node(g: &Arc<Grammar>, text: &str) -> Result<Node, AstError> {
    from_sexp(g, &sexp::parse(text)?)
}

// ---------------------------------------------------------------------------
// Grammar text: `(define-ast <name> (<group> [<prod> <item>...] ...) ...)`.
//
// Items: `field:ref` (single; a ref ending in `?` is a terminal predicate),
// a following `...` repeats the previous item, `#:terminal pred` declares a
// single terminal field named `value`, a bare `name` is a terminal field
// accepting any datum, `(item ...)` groups items (spliced, or each field
// repeated when followed by `...`), and `(field (single|repeat|multiple|terminal ...))`
// spells a pattern out explicitly.

const PATTERN_KEYWORDS: [&str; 4] = ["single", "repeat", "multiple", "terminal"];

fn explicit_pattern(d: &Sexp) -> Result<Pattern, AstError> {
    let items = d.as_list().ok_or_else(|| syntax(format!("expected pattern form, got {d}")))?;
    let head = items.first().and_then(Sexp::as_symbol).unwrap_or("");
    let arg_sym = |i: usize| {
        items.get(i).and_then(Sexp::as_symbol).map(str::to_string).ok_or_else(|| syntax(format!("bad pattern {d}")))
    };
    match head {
        "single" if items.len() == 2 => Ok(Pattern::Single(arg_sym(1)?)),
        "terminal" if items.len() == 2 => Ok(Pattern::Terminal(arg_sym(1)?)),
        "repeat" if items.len() == 2 => Ok(Pattern::Repeat(Box::new(explicit_pattern(&items[1])?))),
        "multiple" => Ok(Pattern::Multiple(items[1..].iter().map(explicit_pattern).collect::<Result<_, _>>()?)),
        _ => Err(syntax(format!("bad pattern {d}"))),
    }
}

fn is_explicit_field(d: &Sexp) -> bool {
    match d.as_list() {
        Some([Sexp::Symbol(name), pat]) => {
            !name.contains(':') && pat.head().is_some_and(|h| PATTERN_KEYWORDS.contains(&h))
        }
        _ => false,
    }
}

fn shorthand_fields(items: &[Sexp]) -> Result<Vec<FieldPattern>, AstError> {
    let mut out: Vec<FieldPattern> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let repeated = items.get(i + 1).is_some_and(|d| d.is_symbol("..."));
        let item = &items[i];
        let mut fields = match item {
            Sexp::Symbol(s) if s == "#:terminal" => {
                let pred = items.get(i + 1).and_then(Sexp::as_symbol).ok_or_else(|| syntax("#:terminal needs a predicate"))?;
                i += 2;
                out.push(FieldPattern::new("value", Pattern::Terminal(pred.into())));
                continue;
            }
            Sexp::Symbol(s) if s == "..." => return Err(syntax("`...` without a preceding item")),
            Sexp::Symbol(s) => match s.split_once(':') {
                Some((name, r)) if r.ends_with('?') => vec![FieldPattern::new(name, Pattern::Terminal(r.into()))],
                Some((name, r)) => vec![FieldPattern::new(name, Pattern::Single(r.into()))],
                None => vec![FieldPattern::new(s.as_str(), Pattern::Terminal("datum?".into()))],
            },
            d if is_explicit_field(d) => {
                let parts = d.as_list().unwrap();
                vec![FieldPattern::new(parts[0].as_symbol().unwrap(), explicit_pattern(&parts[1])?)]
            }
            Sexp::List(inner) => shorthand_fields(inner)?,
            other => return Err(syntax(format!("unexpected grammar item {other}"))),
        };
        if repeated {
            for f in &mut fields {
                f.pattern = Pattern::Repeat(Box::new(f.pattern.clone()));
            }
            i += 1;
        }
        out.extend(fields);
        i += 1;
    }
    Ok(out)
}

fn production_from_sexp(d: &Sexp) -> Result<Production, AstError> {
    let mut items = d.as_list().ok_or_else(|| syntax(format!("expected production, got {d}")))?;
    // `[(name items...)]` is accepted as well as `[name items...]`.
    if let [Sexp::List(inner)] = items {
        items = inner;
    }
    let name = items.first().and_then(Sexp::as_symbol).ok_or_else(|| syntax(format!("production without a name: {d}")))?;
    Ok(Production { name: name.into(), fields: shorthand_fields(&items[1..])? })
}

/// Parses the `(define-ast ...)` text form into a structured description.
pub fn grammar_spec_from_sexp(d: &Sexp) -> Result<GrammarSpec, AstError> {
    let items = d.as_list().ok_or_else(|| syntax("expected (define-ast ...)"))?;
    if items.first().and_then(Sexp::as_symbol) != Some("define-ast") {
        return Err(syntax("expected (define-ast ...)"));
    }
    let name = items.get(1).and_then(Sexp::as_symbol).ok_or_else(|| syntax("define-ast needs a name"))?;
    let groups = items[2..]
        .iter()
        .map(|g| {
            let parts = g.as_list().ok_or_else(|| syntax(format!("expected group, got {g}")))?;
            let gname = parts.first().and_then(Sexp::as_symbol).ok_or_else(|| syntax(format!("group without a name: {g}")))?;
            let productions = parts[1..].iter().map(production_from_sexp).collect::<Result<_, _>>()?;
            Ok(Group { name: gname.into(), productions })
        })
        .collect::<Result<_, AstError>>()?;
    Ok(GrammarSpec { name: name.into(), groups })
}

pub fn parse_grammar(text: &str) -> Result<Arc<Grammar>, AstError> {
    parse_grammar_with(text, Predicates::standard())
}

pub fn parse_grammar_with(text: &str, predicates: Predicates) -> Result<Arc<Grammar>, AstError> {
    define_grammar_with(grammar_spec_from_sexp(&sexp::parse(text)?)?, predicates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    pub(crate) const LC: &str = "(define-ast LC
      (expr [lambda ((x:expr.sym ...) body:expr)]
            [letrec (((ids:expr.sym vals:expr) ...) body:expr)]
            [app (rator:expr rand:expr ...)]
            [n #:terminal number?]
            [sym #:terminal symbol?]))";

    fn lc() -> Arc<Grammar> {
        parse_grammar(LC).unwrap()
    }

    fn n(g: &Arc<Grammar>, v: i128) -> Node {
        make_node(g, "n", vec![Sexp::Int(v).into()]).unwrap()
    }

    fn sym(g: &Arc<Grammar>, s: &str) -> Node {
        make_node(g, "sym", vec![Sexp::sym(s).into()]).unwrap()
    }

    fn app(g: &Arc<Grammar>, op: &str, args: Vec<Node>) -> Node {
        make_node(g, "app", vec![sym(g, op).into(), args.into()]).unwrap()
    }

    fn fold_rule(g: &Arc<Grammar>) -> Rule<'_> {
        Box::new(move |e: &Node| {
            if e.production() != "app" {
                return None;
            }
            let op = e.node("rator")?.leaf("value")?.as_symbol()?.to_string();
            let mut vals = Vec::new();
            for r in e.nodes("rand") {
                if r.production() != "n" {
                    return None;
                }
                vals.push(r.leaf("value")?.as_int()?);
            }
            match op.as_str() {
                "+" => Some(n(g, vals.iter().sum())),
                "*" => Some(n(g, vals.iter().product())),
                _ => None,
            }
        })
    }

    #[test]
    fn lc_grammar_shape() {
        let g = lc();
        assert_eq!(g.groups().len(), 1);
        assert_eq!(g.production_count(), 5);
        let letrec = g.production("letrec").unwrap();
        assert_eq!(letrec.fields.len(), 3);
        assert_eq!(letrec.fields[0].pattern, Pattern::Repeat(Box::new(Pattern::Single("expr.sym".into()))));
    }

    #[test]
    fn dangling_and_duplicate_names() {
        let e = parse_grammar("(define-ast T (expr [ann (e:expr t:typ)]))").unwrap_err();
        assert_eq!(e, AstError::DanglingReference("typ".into()));
        let e = parse_grammar("(define-ast T (expr [a (x:expr)] [a (y:expr)]))").unwrap_err();
        assert_eq!(e, AstError::DuplicateName("a".into()));
        let e = parse_grammar("(define-ast T (expr [a x:integer?]))").unwrap_err();
        assert_eq!(e, AstError::UnknownTerminalPredicate("integer?".into()));
        let e = parse_grammar("(define-ast T (expr))").unwrap_err();
        assert_eq!(e, AstError::EmptyGroup("expr".into()));
    }

    #[test]
    fn hakaru_grammar_with_groups() {
        let g = parse_grammar(
            "(define-ast hakaru
               (expr [val (type v)]
                     [if (type tst:expr thn:expr els:expr)]
                     [app (type rator:expr rands:expr ...)]
                     [match (type tst:expr branches:expr ...)]
                     [branch (p:pat body:expr)]
                     [intrf (sym)]
                     [var (type sym info)])
               (pat [(pair (a:pat b:pat))]))",
        )
        .unwrap();
        let names: Vec<_> = g.groups().iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["expr", "pat"]);
        assert_eq!(g.production_count(), 8);
    }

    #[test]
    fn make_node_checks_shape() {
        let g = lc();
        let letrec = make_node(&g, "letrec", vec![vec![sym(&g, "x")].into(), vec![n(&g, 1)].into(), sym(&g, "x").into()]).unwrap();
        assert_eq!(letrec.list("ids").unwrap().len(), 1);
        assert_eq!(letrec.list("vals").unwrap().len(), 1);

        let e = make_node(&g, "n", vec![Sexp::Str("hello".into()).into()]).unwrap_err();
        assert!(matches!(e, AstError::TerminalPredicateFailed { .. }));
        let e = make_node(&g, "app", vec![]).unwrap_err();
        assert!(matches!(e, AstError::ArityMismatch { expected: 2, found: 0, .. }));
        // ids must be sym nodes, not arbitrary exprs
        let e = make_node(&g, "letrec", vec![vec![n(&g, 1)].into(), vec![n(&g, 1)].into(), sym(&g, "x").into()]).unwrap_err();
        assert!(matches!(e, AstError::ShapeMismatch { .. }));
    }

    #[test]
    fn map_children_applies_per_position() {
        let g = lc();
        let e = app(&g, "+", vec![n(&g, 1), n(&g, 2)]);
        let bump = |c: &Node| match c.leaf("value").and_then(Sexp::as_int) {
            Some(v) if c.production() == "n" => n(&g, v + 1),
            _ => c.clone(),
        };
        let out = map_children(&e, bump).unwrap();
        assert_eq!(out, app(&g, "+", vec![n(&g, 2), n(&g, 3)]));
        assert_eq!(map_children(&e, |c| c.clone()).unwrap(), e);

        let k = 3;
        let letrec = make_node(
            &g,
            "letrec",
            vec![
                (0..k).map(|i| sym(&g, &format!("x{i}"))).collect::<Vec<_>>().into(),
                (0..k).map(|i| n(&g, i)).collect::<Vec<_>>().into(),
                sym(&g, "x0").into(),
            ],
        )
        .unwrap();
        let calls = Cell::new(0);
        map_children(&letrec, |c| {
            calls.set(calls.get() + 1);
            c.clone()
        })
        .unwrap();
        assert_eq!(calls.get(), 2 * k as usize + 1);
    }

    #[test]
    fn map_children_rejects_wrong_group_result() {
        let g = lc();
        let letrec = make_node(&g, "letrec", vec![vec![sym(&g, "x")].into(), vec![n(&g, 1)].into(), sym(&g, "x").into()]).unwrap();
        let e = map_children(&letrec, |_| n(&g, 0)).unwrap_err();
        assert!(matches!(e, AstError::ResultShapeMismatch { .. }));
    }

    #[test]
    fn constant_fold_bottom_up() {
        let g = lc();
        let rules = vec![fold_rule(&g)];
        let e = app(&g, "+", vec![n(&g, 1), n(&g, 2), n(&g, 3)]);
        assert_eq!(rewrite_bottom_up(&rules, &e).unwrap(), n(&g, 6));
        let e = app(&g, "+", vec![n(&g, 1), sym(&g, "x")]);
        assert_eq!(rewrite_bottom_up(&rules, &e).unwrap(), e);
        let e = app(&g, "*", vec![n(&g, 2), app(&g, "+", vec![n(&g, 1), n(&g, 2)])]);
        assert_eq!(rewrite_bottom_up(&rules, &e).unwrap(), n(&g, 6));
    }

    #[test]
    fn bottom_up_visits_each_node_once() {
        let g = lc();
        let e = app(&g, "*", vec![n(&g, 2), app(&g, "+", vec![n(&g, 1), sym(&g, "y")])]);
        let visits = Cell::new(0);
        let counter: Rule<'_> = Box::new(|_| {
            visits.set(visits.get() + 1);
            None
        });
        rewrite_bottom_up(&[counter], &e).unwrap();
        assert_eq!(visits.get(), e.size());
    }

    #[test]
    fn top_down_fires_before_descending() {
        let g = lc();
        let rule = fold_rule(&g);
        let e = app(&g, "*", vec![n(&g, 2), app(&g, "+", vec![n(&g, 1), n(&g, 2)])]);
        // outer rule guard fails (inner app not yet folded), inner folds
        let out = rewrite_top_down(&[rule], &e).unwrap();
        assert_eq!(out, app(&g, "*", vec![n(&g, 2), n(&g, 3)]));
    }

    #[test]
    fn pretty_forms() {
        let g = lc();
        assert_eq!(pretty_print(&n(&g, 6)), "(n 6)");
        assert_eq!(pretty_print(&app(&g, "+", vec![n(&g, 1), n(&g, 2)])), "(app (sym +) (n 1) (n 2))");
        let letrec = make_node(&g, "letrec", vec![vec![sym(&g, "x")].into(), vec![n(&g, 1)].into(), sym(&g, "x").into()]).unwrap();
        assert_eq!(pretty_print(&letrec), "(letrec ((sym x)) ((n 1)) (sym x))");
        assert_eq!(read_node(&g, &pretty_print(&letrec)).unwrap(), letrec);
    }

    #[test]
    fn multiple_and_nested_repeat_read_back() {
        let g = parse_grammar(
            "(define-ast M
               (e [pairs (ps (repeat (multiple (single e) (terminal number?))))]
                  [grid (rows (repeat (repeat (terminal symbol?))))]
                  [k #:terminal number?]))",
        )
        .unwrap();
        let k = |v| make_node(&g, "k", vec![Sexp::Int(v).into()]).unwrap();
        let pairs = make_node(
            &g,
            "pairs",
            vec![Child::List(vec![
                Child::List(vec![k(1).into(), Sexp::Int(10).into()]),
                Child::List(vec![k(2).into(), Sexp::Float(2.5).into()]),
            ])],
        )
        .unwrap();
        assert_eq!(pretty_print(&pairs), "(pairs (k 1) 10 (k 2) 2.5)");
        assert_eq!(read_node(&g, &pretty_print(&pairs)).unwrap(), pairs);
        let grid = make_node(
            &g,
            "grid",
            vec![Child::List(vec![Child::List(vec![Sexp::sym("a").into()]), Child::List(vec![])])],
        )
        .unwrap();
        assert_eq!(pretty_print(&grid), "(grid (a) ())");
        assert_eq!(read_node(&g, &pretty_print(&grid)).unwrap(), grid);
    }

    #[test]
    fn reader_rejects_bad_text() {
        let g = lc();
        assert!(read_node(&g, "(n hello)").is_err());
        assert!(read_node(&g, "(app)").is_err());
        assert!(read_node(&g, "(frob 1)").is_err());
    }
}
