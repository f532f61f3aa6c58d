use std::collections::BTreeMap;

use super::ir::LModule;

/// Static instruction counts. `total` counts non-terminator instructions;
/// terminators are counted separately.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InstrCounts {
    pub by_opcode: BTreeMap<String, usize>,
    pub total: usize,
    pub terminators: usize,
}

impl InstrCounts {
    pub fn get(&self, opcode: &str) -> usize {
        self.by_opcode.get(opcode).copied().unwrap_or(0)
    }

    /// Branching terminators (`br`, `condbr`, `switch`).
    pub fn branches(&self) -> usize {
        self.get("br") + self.get("condbr") + self.get("switch")
    }
}

pub fn static_instr_count(m: &LModule) -> InstrCounts {
    let mut c = InstrCounts::default();
    for f in &m.functions {
        for b in &f.blocks {
            for i in &b.instrs {
                *c.by_opcode.entry(i.op.opcode().to_string()).or_default() += 1;
                if i.op.is_terminator() {
                    c.terminators += 1;
                } else {
                    c.total += 1;
                }
            }
        }
    }
    c
}
