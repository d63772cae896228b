//! Data-parallel execution helpers.
//!
//! Grid scans, per-point eigenproblems and ensemble draws are all
//! embarrassingly parallel. Everything funnels through `map_indexed`, which
//! runs on rayon when the `parallel` feature is enabled and falls back to a
//! plain sequential map otherwise. Results are collected in index order and
//! reduced sequentially by the callers, so outputs are bit-identical
//! regardless of thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when available. Output order is `0..n`.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs `f` on a dedicated pool with `n` threads (`None` = the global pool).
/// Without the `parallel` feature everything is sequential anyway.
#[cfg(feature = "parallel")]
pub fn with_threads<T: Send>(n: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match n {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<T: Send>(_n: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    f()
}

/// RNG for ensemble member `stream` of a run seeded with `seed`.
///
/// Every member derives its own stream, so draws do not depend on the
/// schedule that evaluates them.
pub fn member_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
