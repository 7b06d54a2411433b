//! Parallel execution of independent simulations.
//!
//! Runs are embarrassingly parallel: each builds its own system and RNG
//! from an index. With the `parallel` feature (default) the batch maps over
//! a rayon pool; without it, [`run_batch`] degrades to the sequential path
//! with identical outputs. [`run_batch_sequential`] is always available so
//! the two can be benchmarked against each other.

/// Maps `f` over `0..count` sequentially.
pub fn run_batch_sequential<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..count).map(f).collect()
}

/// Maps `f` over `0..count`, in parallel when the `parallel` feature is
/// enabled. Output order matches the index order either way.
#[cfg(feature = "parallel")]
pub fn run_batch<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    run_batch_sequential(count, f)
}
