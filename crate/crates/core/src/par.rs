//! Data-parallel execution with a sequential fallback.
//!
//! Built with the default `parallel` feature, indexed maps run on rayon;
//! without it they run as plain loops. Results are collected in index order
//! either way, so output is identical across worker counts and builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn par_map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn par_map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Run `f` on a dedicated pool with `workers` threads (parallel builds only;
/// sequential builds and `workers = None` just call `f`).
#[cfg(feature = "parallel")]
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match workers {
        Some(w) if w > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .expect("failed to build worker pool")
            .install(f),
        _ => f(),
    }
}

/// Run `f` on a dedicated pool with `workers` threads (parallel builds only;
/// sequential builds and `workers = None` just call `f`).
#[cfg(not(feature = "parallel"))]
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    F: FnOnce() -> R,
{
    let _ = workers;
    f()
}
