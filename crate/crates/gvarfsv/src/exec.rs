//! Execution-mode plumbing: data-parallel loops with a sequential fallback.
//!
//! The heavy inner loops (per-equation regressions, per-series volatility
//! paths, per-period factor draws, per-draw rotation search and IRF
//! propagation) are independent given the conditioning state, so they map
//! cleanly onto rayon. Compiling with `--no-default-features` removes the
//! rayon dependency entirely; [`ExecMode::Parallel`] then degrades to the
//! sequential path. Because RNG streams are derived per unit (see
//! [`crate::rng`]), both modes produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How indexed work units are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Plain loop on the calling thread.
    Sequential,
    /// rayon work-stealing pool (sequential when the `parallel` feature is off).
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indexed<T, F>(n: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_indexed`]; returns the first error by index order.
pub fn try_map_indexed<T, E, F>(n: usize, mode: ExecMode, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Runs `body` inside a rayon pool with `workers` threads when the `parallel`
/// feature is enabled and `workers` is set; otherwise runs it directly.
pub fn with_workers<T: Send>(workers: Option<usize>, body: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool construction");
        return pool.install(body);
    }
    let _ = workers;
    body()
}
