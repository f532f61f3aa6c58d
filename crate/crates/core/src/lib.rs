//! An embeddable toolkit for building compilers for small domain-specific
//! languages: grammar-driven AST definitions, a typed high-level IR, a
//! basic-block low IR, an optimization pass library, and a deterministic
//! execution engine with host interop.

pub mod astdef;
pub mod batch;
pub mod exec;
pub mod hir;
pub mod intrinsics;
pub mod lir;
pub mod lower;
pub mod ops;
pub mod opt;
pub mod sexp;
pub mod types;

pub use types::{FnSig, HType};
