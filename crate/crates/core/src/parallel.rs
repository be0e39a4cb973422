//! Data-parallel path mapping with a sequential fallback.
//!
//! `map_paths` fans one closure out over path indices `0..n` (on rayon when
//! the `parallel` feature is enabled) and returns the results in path order,
//! so any reduction over the output is deterministic regardless of the
//! worker count. `map_paths_seq` is the always-sequential variant used by
//! the benches and the determinism tests.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_paths<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_paths<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential reference implementation of [`map_paths`].
pub fn map_paths_seq<T, F>(n: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..n).map(f).collect()
}

/// Ordered (left-to-right) sum; the deterministic reduction used by all
/// estimators.
pub fn ordered_sum(xs: &[f64]) -> f64 {
    xs.iter().sum()
}
