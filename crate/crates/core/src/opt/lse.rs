use std::collections::{HashMap, HashSet};

use crate::lir::{reg_types, LFunction, LModule, Op, Reg};

pub fn lse_module(m: &LModule) -> LModule {
    LModule { functions: m.functions.iter().map(lse_function).collect(), ..m.clone() }
}

/// Load/store elimination within extended basic blocks: a block with a
/// single predecessor starts from the predecessor's known memory state.
///
/// Stores to non-escaping allocas only clobber their own slot. Any other
/// store, and any call, clobbers every pointer that is not such a slot.
/// Stores to a slot overwritten later in the same block, or to a slot that
/// is never loaded, are removed.
pub fn lse_function(f: &LFunction) -> LFunction {
    let mut f = f.clone();
    let types = reg_types(&f);
    let local = private_slots(&f);
    let mut preds: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, b) in f.blocks.iter().enumerate() {
        for s in b.successors() {
            preds.entry(s.to_string()).or_default().push(i);
        }
    }
    let mut rename: HashMap<Reg, Reg> = HashMap::new();
    let mut exit_state: Vec<Option<HashMap<Reg, Reg>>> = vec![None; f.blocks.len()];
    for bi in 0..f.blocks.len() {
        let mut avail = match preds.get(&f.blocks[bi].label).map(Vec::as_slice) {
            Some([p]) if bi > 0 => exit_state[*p].clone().unwrap_or_default(),
            _ => HashMap::new(),
        };
        let mut pending: HashMap<Reg, usize> = HashMap::new();
        let mut dead = vec![false; f.blocks[bi].instrs.len()];
        for (ii, instr) in f.blocks[bi].instrs.iter_mut().enumerate() {
            for u in instr.op.uses_mut() {
                *u = resolve(&rename, *u);
            }
            match &instr.op {
                Op::Load(p) => {
                    let d = instr.dst().expect("load has a result");
                    pending.remove(p);
                    match avail.get(p) {
                        Some(v) if types.get(v) == types.get(&d) => {
                            rename.insert(d, *v);
                            dead[ii] = true;
                        }
                        _ => {
                            avail.insert(*p, d);
                        }
                    }
                }
                Op::Store { val, ptr } => {
                    if local.contains(ptr) {
                        if let Some(prev) = pending.insert(*ptr, ii) {
                            dead[prev] = true;
                        }
                    } else {
                        avail.retain(|k, _| local.contains(k));
                    }
                    avail.insert(*ptr, *val);
                }
                Op::Call { .. } => avail.retain(|k, _| local.contains(k)),
                _ => {}
            }
        }
        let mut k = 0;
        f.blocks[bi].instrs.retain(|_| {
            k += 1;
            !dead[k - 1]
        });
        exit_state[bi] = Some(avail);
    }
    for b in &mut f.blocks {
        for i in &mut b.instrs {
            for u in i.op.uses_mut() {
                *u = resolve(&rename, *u);
            }
        }
    }
    let loaded: HashSet<Reg> = f
        .blocks
        .iter()
        .flat_map(|b| &b.instrs)
        .filter_map(|i| match i.op {
            Op::Load(p) => Some(p),
            _ => None,
        })
        .collect();
    for b in &mut f.blocks {
        b.instrs.retain(|i| !matches!(&i.op, Op::Store { ptr, .. } if local.contains(ptr) && !loaded.contains(ptr)));
    }
    f
}

fn resolve(rename: &HashMap<Reg, Reg>, mut r: Reg) -> Reg {
    while let Some(n) = rename.get(&r) {
        r = *n;
    }
    r
}

/// Allocas used only as the address operand of loads and stores.
fn private_slots(f: &LFunction) -> HashSet<Reg> {
    let mut slots: HashSet<Reg> = HashSet::new();
    let mut escaped: HashSet<Reg> = HashSet::new();
    for i in f.blocks.iter().flat_map(|b| &b.instrs) {
        match &i.op {
            Op::Alloca(_) => {
                slots.extend(i.dst());
            }
            Op::Load(_) => {}
            Op::Store { val, .. } => {
                escaped.insert(*val);
            }
            op => escaped.extend(op.uses()),
        }
    }
    slots.retain(|r| !escaped.contains(r));
    slots
}
