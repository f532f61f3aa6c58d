use dslkit::astdef::{rewrite_bottom_up, Node, Rule};

use super::{mk_if, mk_val, op_of, MhkError, MType};

/// Operands of `index` when `n` is an application of it.
fn index_operands(n: &Node) -> Option<(Node, Node)> {
    if n.production() != "app" || op_of(n)? != "index" {
        return None;
    }
    match n.nodes("rands").as_slice() {
        [a, i] => Some(((*a).clone(), (*i).clone())),
        _ => None,
    }
}

fn nat_val(n: &Node) -> Option<usize> {
    if n.production() != "val" || !n.leaf("type")?.is_symbol("nat") {
        return None;
    }
    usize::try_from(n.leaf("v")?.as_int()?).ok()
}

/// Indexing a short array literal by a two-way choice of constant
/// positions selects between the two elements directly.
fn literal_by_choice(n: &Node) -> Option<Node> {
    let (arr, ind) = index_operands(n)?;
    if arr.production() != "app" || op_of(&arr)? != "array-literal" || ind.production() != "if" {
        return None;
    }
    let contents = arr.nodes("rands");
    if contents.len() >= 5 {
        return None;
    }
    let (thn, els) = (nat_val(ind.node("thn")?)?, nat_val(ind.node("els")?)?);
    let ta = MType::parse(n.leaf("type")?).ok()?;
    Some(mk_if(&ta, ind.node("tst")?.clone(), (*contents.get(thn)?).clone(), (*contents.get(els)?).clone()))
}

/// Indexing a variable whose element type is a constant yields the constant.
fn constant_typed_var(n: &Node) -> Option<Node> {
    let (arr, _) = index_operands(n)?;
    if arr.production() != "var" {
        return None;
    }
    let tv = arr.leaf("type")?.as_list()?;
    let [_, elem] = tv else { return None };
    let MType::Const(v) = MType::parse(elem).ok()? else { return None };
    let ta = MType::parse(n.leaf("type")?).ok()?;
    Some(mk_val(&ta, v))
}

/// Indexing a constant-value array yields its content.
fn constant_value_array(n: &Node) -> Option<Node> {
    let (arr, _) = index_operands(n)?;
    if arr.production() != "app" || op_of(&arr)? != "constant-value-array" {
        return None;
    }
    match arr.nodes("rands").as_slice() {
        [_, content] => Some((*content).clone()),
        _ => None,
    }
}

/// The three array-access rules, in priority order.
pub fn index_rules() -> Vec<Rule<'static>> {
    vec![Box::new(literal_by_choice), Box::new(constant_typed_var), Box::new(constant_value_array)]
}

/// One bottom-up pass of [`index_rules`].
pub fn index_rewrite(e: &Node) -> Result<Node, MhkError> {
    Ok(rewrite_bottom_up(&index_rules(), e)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mhk::{mk_app, mk_var};
    use dslkit::sexp::Sexp;

    fn r(x: f64) -> Node {
        mk_val(&MType::Real, Sexp::Float(x))
    }

    fn nat(k: i128) -> Node {
        mk_val(&MType::Nat, Sexp::Int(k))
    }

    fn literal(n: usize) -> Node {
        mk_app(&MType::Array(Box::new(MType::Real)), "array-literal", (0..n).map(|k| r(k as f64 + 0.5)).collect())
    }

    fn choice() -> Node {
        mk_if(&MType::Nat, mk_var(&MType::Nat, "c"), nat(0), nat(2))
    }

    #[test]
    fn short_literal_rewritten() {
        let e = mk_app(&MType::Real, "index", vec![literal(3), choice()]);
        let want = mk_if(&MType::Real, mk_var(&MType::Nat, "c"), r(0.5), r(2.5));
        assert_eq!(index_rewrite(&e).unwrap(), want);
    }

    #[test]
    fn long_literal_left_alone() {
        let e = mk_app(&MType::Real, "index", vec![literal(6), choice()]);
        assert_eq!(index_rewrite(&e).unwrap(), e);
    }

    #[test]
    fn constant_type_and_constant_array() {
        let ct = MType::Array(Box::new(MType::Const(Sexp::Float(3.0))));
        let e = mk_app(&MType::Real, "index", vec![mk_var(&ct, "a"), mk_var(&MType::Nat, "i")]);
        assert_eq!(index_rewrite(&e).unwrap(), r(3.0));
        let cva = mk_app(&MType::Array(Box::new(MType::Real)), "constant-value-array", vec![nat(4), r(1.5)]);
        let e = mk_app(&MType::Real, "index", vec![cva, mk_var(&MType::Nat, "i")]);
        assert_eq!(index_rewrite(&e).unwrap(), r(1.5));
    }
}
