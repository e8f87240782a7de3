//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature the map runs on the rayon pool unless the
//! caller asks for sequential execution; without it everything is sequential.
//! Results are always returned in index order.

/// `(0..n).map(f)`, possibly in parallel.
pub fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Whether this build can run in parallel at all.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Worker threads the parallel map would use.
pub fn worker_threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    1
}
