//! Thin switch between rayon and plain iterators.
//!
//! Every helper here hands out disjoint work units whose results do not
//! depend on scheduling, so output is bit-identical with or without the
//! `parallel` feature and for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(index, chunk)` for each `chunk_len`-sized chunk of `data`.
pub(crate) fn for_each_chunk<F>(data: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if chunk_len == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Elementwise update over a zipped pair of equal-length slices.
pub(crate) fn zip_apply<F>(dst: &mut [f64], src: &[f64], f: F)
where
    F: Fn(&mut f64, f64) + Send + Sync,
{
    debug_assert_eq!(dst.len(), src.len());
    #[cfg(feature = "parallel")]
    dst.par_iter_mut()
        .zip(src.par_iter())
        .for_each(|(d, &s)| f(d, s));
    #[cfg(not(feature = "parallel"))]
    dst.iter_mut().zip(src.iter()).for_each(|(d, &s)| f(d, s));
}

/// Maps `0..n` through `f`, preserving index order in the output.
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Number of worker threads the data-parallel kernels will use.
pub fn thread_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
