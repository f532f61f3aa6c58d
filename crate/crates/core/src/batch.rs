//! Data-parallel evaluation of many inputs against one compiled module.
//!
//! With the `parallel` feature (on by default) work is spread over the
//! rayon thread pool; without it the same functions run sequentially.
//! Results are always returned in input order, and since every invocation
//! is deterministic the two modes produce identical output.

use crate::exec::{CompiledModule, ExecError, HostValue, Outcome};

/// Calls `name` once per argument list, in parallel when enabled.
pub fn apply_batch(cm: &CompiledModule, name: &str, inputs: &[Vec<HostValue>]) -> Vec<Result<Outcome, ExecError>> {
    map_batch(inputs, |args| cm.apply(name, args))
}

/// Sequential version of [`apply_batch`], available regardless of features.
pub fn apply_batch_seq(cm: &CompiledModule, name: &str, inputs: &[Vec<HostValue>]) -> Vec<Result<Outcome, ExecError>> {
    map_batch_seq(inputs, |args| cm.apply(name, args))
}

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_batch<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_batch<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_batch_seq(items, f)
}

pub fn map_batch_seq<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Whether [`map_batch`] runs in parallel in this build.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
