// Index-parallel map with a sequential fallback when the `parallel` feature
// is off. Output order always follows the index order.

#[cfg(feature = "parallel")]
pub(crate) fn map_indices<T, F>(range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<T, F>(range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    range.map(f).collect()
}
