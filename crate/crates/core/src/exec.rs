//! Execution policy for the crate's data-parallel loops.
//!
//! Every parallel path has a sequential twin with identical output; `Parallel` degrades to
//! `Sequential` when the crate is built without the `parallel` feature.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Index of the first item (in slice order) satisfying `pred`.
pub fn position_first<T, F>(items: &[T], policy: Parallelism, pred: F) -> Option<usize>
where
    T: Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        return items.par_iter().position_first(pred);
    }
    let _ = policy;
    items.iter().position(pred)
}

/// Order-preserving map.
pub fn map_collect<T, U, F>(items: &[T], policy: Parallelism, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = policy;
    items.iter().map(f).collect()
}

/// Fold-and-reduce over `0..len` with an associative `merge`.
pub fn fold_range<A, Fold, Merge, Init>(
    len: usize,
    policy: Parallelism,
    init: Init,
    fold: Fold,
    merge: Merge,
) -> A
where
    A: Send,
    Init: Fn() -> A + Sync + Send,
    Fold: Fn(A, usize) -> A + Sync + Send,
    Merge: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        return (0..len)
            .into_par_iter()
            .fold(&init, &fold)
            .reduce(&init, &merge);
    }
    let _ = (policy, &merge);
    (0..len).fold(init(), fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let xs: Vec<u32> = (0..10_000).collect();
        for p in [Parallelism::Sequential, Parallelism::Parallel] {
            assert_eq!(position_first(&xs, p, |&x| x > 0 && x % 977 == 0), Some(977));
            assert_eq!(position_first(&xs, p, |&x| x > 20_000), None);
            let sq = map_collect(&xs, p, |&x| x as u64 * 2);
            assert_eq!(sq[123], 246);
            let sum = fold_range(xs.len(), p, || 0u64, |a, i| a + i as u64, |a, b| a + b);
            assert_eq!(sum, 49_995_000);
        }
    }
}
