//! Index-parallel map abstraction.
//!
//! The core only needs "evaluate `f(i)` for `i in 0..n` and give the results
//! back in index order". [`Sequential`] does that in a loop; the std crate
//! supplies a thread-pool backed implementation. Results are always reduced
//! by the caller in index order, so outputs do not depend on the executor.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
