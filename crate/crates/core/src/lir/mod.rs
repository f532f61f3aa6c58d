//! The low IR: basic blocks of single-assignment registers with
//! alloca-backed mutable memory and no phi nodes.

mod ir;
mod metrics;
mod text;
mod verify;

pub use ir::*;
pub use metrics::{static_instr_count, InstrCounts};
pub use text::{dump_module, function_to_sexp, module_to_sexp, parse_function_text, parse_module, reg_types, LirParseError};
pub use verify::{verify, VerifyError, VerifyErrorKind};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::HType;

    const ADD: &str = "(module m
      (fn add1 ((%0 i64)) i64
        (block entry
          (%1 (ptr i64) (alloca i64))
          (store %0 %1)
          (%2 i64 (load %1))
          (%3 i64 (const 1))
          (%4 i64 (add %2 %3))
          (%5 i1 (icmp-ult %4 %0))
          (condbr %5 a b))
        (block a (ret %4))
        (block b (%6 i64 (const -1)) (ret %6))))";

    #[test]
    fn parse_dump_identity() {
        let m = parse_module(ADD).unwrap();
        verify(&m).unwrap();
        let text = dump_module(&m);
        assert_eq!(parse_module(&text).unwrap(), m);
        assert_eq!(dump_module(&parse_module(&text).unwrap()), text);
    }

    #[test]
    fn malformed_text() {
        assert!(matches!(parse_module("(fn"), Err(LirParseError::Syntax(_))));
        assert!(matches!(parse_module("(module m (fn f () i64 (block entry (frob))))"), Err(LirParseError::Malformed { .. })));
    }

    #[test]
    fn empty_function_counts() {
        let m = parse_module("(module m (fn f () void (block entry (ret))))").unwrap();
        verify(&m).unwrap();
        let c = static_instr_count(&m);
        assert_eq!((c.total, c.terminators), (0, 1));
    }

    fn kinds(text: &str) -> Vec<VerifyErrorKind> {
        verify(&parse_module(text).unwrap()).unwrap_err().into_iter().map(|e| e.kind).collect()
    }

    #[test]
    fn multiple_terminators() {
        let k = kinds("(module m (fn f () void (block entry (ret) (ret))))");
        assert!(k.contains(&VerifyErrorKind::MultipleTerminators));
    }

    #[test]
    fn use_before_def_on_some_path() {
        let k = kinds(
            "(module m (fn f ((%0 i1)) i64
               (block entry (condbr %0 a b))
               (block a (%1 i64 (const 1)) (br c))
               (block b (br c))
               (block c (ret %1))))",
        );
        assert_eq!(k, vec![VerifyErrorKind::UseBeforeDef(Reg(1))]);
    }

    #[test]
    fn unreachable_blocks_pass_vacuously() {
        let m = parse_module(
            "(module m (fn f () i64
               (block entry (%1 i64 (const 1)) (ret %1))
               (block dead (ret %2))
               (block dead2 (%2 i64 (const 2)) (br dead))))",
        )
        .unwrap();
        verify(&m).unwrap();
    }

    #[test]
    fn type_and_target_errors() {
        let k = kinds("(module m (fn f ((%0 i64)) i64 (block entry (%1 f32 (add %0 %0)) (ret %0))))");
        assert!(matches!(k[0], VerifyErrorKind::TypeMismatch(_)));
        let k = kinds("(module m (fn f () void (block entry (br nowhere))))");
        assert_eq!(k, vec![VerifyErrorKind::UnknownBlock("nowhere".into())]);
        let k = kinds("(module m (fn f () void (block entry (br entry))))");
        assert_eq!(k, vec![VerifyErrorKind::EntryHasPredecessors]);
        let k = kinds("(module m (fn f () void (block entry (%1 i64 (const 1)) (%1 i64 (const 2)) (ret))))");
        assert_eq!(k, vec![VerifyErrorKind::Redefinition(Reg(1))]);
        let k = kinds("(module m (fn f () void (block entry (%1 i64 (const 1)))))");
        assert_eq!(k, vec![VerifyErrorKind::MissingTerminator]);
    }

    #[test]
    fn float_constants_round_trip() {
        let text = "(module m (fn f () f32 (block entry (%1 f32 (const 0.1)) (%2 f64 (const -0.0)) (%3 f32 (const (nan 2143289345))) (ret %1))))";
        let m = parse_module(text).unwrap();
        assert_eq!(parse_module(&dump_module(&m)).unwrap(), m);
        let f = &m.functions[0];
        assert_eq!(f.blocks[0].instrs[0].result.as_ref().unwrap().1, HType::F32);
    }
}
