//! The high-level IR: typed expressions and statements, functions and
//! modules, with builders usable directly and from generator code.

mod ast;
pub mod build;
pub mod dump;
mod module;
mod typecheck;

pub use ast::*;
pub use build::{HirError, Part, ShapeError};
pub use dump::dump_module;
pub use module::{Global, HModule};
pub use typecheck::{typecheck_module, TypeError, TypeErrorKind};
