//! Execution strategy for the crate's data-parallel loops.
//!
//! With the `parallel` feature (default) independent work items such as grid
//! points, probe directions and Pauli axes are distributed with rayon. Without
//! it, or inside [`with`]`(Execution::Sequential, ..)`, the same loops run on the
//! calling thread. Results are always collected in index order, so both
//! strategies produce bit-identical output.

use std::cell::Cell;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

thread_local! {
    static CURRENT: Cell<Option<Execution>> = const { Cell::new(None) };
}

/// Strategy in effect on the calling thread.
pub fn current() -> Execution {
    CURRENT.with(|c| c.get()).unwrap_or_default()
}

struct Restore(Option<Execution>);

impl Drop for Restore {
    fn drop(&mut self) {
        CURRENT.with(|c| c.set(self.0));
    }
}

/// Runs `f` with `exec` as the strategy for every library call it makes on
/// this thread. `Parallel` degrades to sequential when the feature is off.
pub fn with<R>(exec: Execution, f: impl FnOnce() -> R) -> R {
    let _restore = Restore(CURRENT.with(|c| c.replace(Some(exec))));
    f()
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match current() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}
