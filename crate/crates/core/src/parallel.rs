//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these fan out over the rayon pool;
//! without it they degrade to plain iterators. Callers that must stay
//! sequential regardless of features (benchmark baselines, the event loop
//! inside one episode) use the `_sequential` variants.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum items per rayon task; epoch backups are tiny, so oversplitting
/// costs more than it saves.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 64;

pub(crate) fn map_range<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().with_min_len(MIN_CHUNK).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub(crate) fn map_range_sequential<O, F>(n: usize, f: F) -> Vec<O>
where
    F: Fn(usize) -> O,
{
    (0..n).map(f).collect()
}

/// Dispatches between the parallel and sequential map depending on `parallel`.
pub(crate) fn map_range_with<O, F>(parallel: bool, n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    if parallel {
        map_range(n, f)
    } else {
        map_range_sequential(n, f)
    }
}
