//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) work is spread over the
//! current rayon pool. Without it, or inside [`sequential`], every helper
//! runs in order on the calling thread. Reductions always combine fixed-size
//! chunks in index order, so results are bit-identical across thread counts
//! and across both execution paths.

use std::cell::Cell;
use std::ops::Range;

/// Work below this many items per call is never split.
pub const MIN_PARALLEL_LEN: usize = 16_384;

/// Chunk length used by [`sum_chunked`].
pub const REDUCE_CHUNK: usize = 4_096;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module pinned to the sequential path
/// on the calling thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// True when helpers called from this thread may use rayon.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() && n > 1 {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Like [`map_range`] but only splits when `n` is at least [`MIN_PARALLEL_LEN`].
pub fn map_range_large<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if n < MIN_PARALLEL_LEN {
        return (0..n).map(f).collect();
    }
    map_range(n, f)
}

/// Sums `f(range)` over consecutive chunks of `0..n`.
///
/// Chunk boundaries depend only on `n`, and partial sums are added left to
/// right, so the floating-point result does not depend on scheduling.
pub fn sum_chunked<F>(n: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let bounds = |c: usize| c * REDUCE_CHUNK..((c + 1) * REDUCE_CHUNK).min(n);
    let partials: Vec<f64> = if n >= MIN_PARALLEL_LEN {
        map_range(chunks, |c| f(bounds(c)))
    } else {
        (0..chunks).map(|c| f(bounds(c))).collect()
    };
    partials.into_iter().sum()
}

/// Runs `f` inside a pool with `workers` threads. `None` uses the global pool.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(w) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_both_paths() {
        let n = 50_000;
        let f = |r: Range<usize>| r.map(|i| (i as f64).sin()).sum::<f64>();
        let a = sum_chunked(n, f);
        let b = sequential(|| sum_chunked(n, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let v = map_range(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_flag_is_scoped() {
        sequential(|| assert!(!parallel_enabled()));
        assert_eq!(parallel_enabled(), cfg!(feature = "parallel"));
    }
}
