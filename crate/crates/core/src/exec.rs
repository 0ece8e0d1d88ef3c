//! Execution strategy for the data-parallel inner loops.
//!
//! With the `parallel` feature (default) the [`Execution::Parallel`] strategy
//! fans work out over the rayon global pool. Without it every strategy runs
//! sequentially, so the results are identical either way: all helpers here
//! preserve input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// True when work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fold `0..n` into chunk-local accumulators and merge them.
///
/// `merge` must be associative; chunks are merged left to right so the
/// result does not depend on scheduling.
pub fn fold_range<A, F, M>(exec: Execution, n: usize, init: A, fold: F, merge: M) -> A
where
    A: Clone + Send + Sync,
    F: Fn(A, usize) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    fold_chunked(exec, n, 4096, init, fold, merge)
}

/// [`fold_range`] with an explicit chunk length, for loops whose items are
/// individually expensive.
pub fn fold_chunked<A, F, M>(exec: Execution, n: usize, chunk: usize, init: A, fold: F, merge: M) -> A
where
    A: Clone + Send + Sync,
    F: Fn(A, usize) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let chunk = chunk.max(1);
    let chunks = n.div_ceil(chunk);
    let partials = map_range(exec, chunks, |c| {
        let lo = c * chunk;
        let hi = (lo + chunk).min(n);
        (lo..hi).fold(init.clone(), &fold)
    });
    partials.into_iter().fold(init, merge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_and_preserve_order() {
        let xs: Vec<u64> = (0..10_000).collect();
        let a = map(Execution::Parallel, &xs, |x| x * 3);
        let b = map(Execution::Sequential, &xs, |x| x * 3);
        assert_eq!(a, b);
        assert_eq!(a[17], 51);
    }

    #[test]
    fn fold_is_schedule_independent() {
        let par = fold_range(Execution::Parallel, 100_001, 0u64, |acc, i| acc + i as u64, |a, b| a + b);
        let seq = fold_range(Execution::Sequential, 100_001, 0u64, |acc, i| acc + i as u64, |a, b| a + b);
        assert_eq!(par, seq);
        assert_eq!(seq, 100_000 * 100_001 / 2);
    }
}
