//! Thin helpers that run in parallel with the `parallel` feature and
//! serially otherwise. Results are identical either way.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Calls `f(row, chunk)` for each `width`-sized chunk of `out`.
pub(crate) fn for_each_row<T, F>(out: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(width).enumerate().for_each(|(i, c)| f(i, c));
    }
}

pub(crate) fn sort_unstable_by_key<T, K, F>(v: &mut [T], f: F)
where
    T: Send,
    K: Ord,
    F: Fn(&T) -> K + Sync,
{
    #[cfg(feature = "parallel")]
    {
        v.par_sort_unstable_by_key(f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        v.sort_unstable_by_key(f);
    }
}

/// Fallible [`for_each_row`] with per-worker state from `init`. Stops at
/// an error; which error wins under parallelism is unspecified.
pub(crate) fn try_for_each_row_init<T, S, E, I, F>(out: &mut [T], width: usize, init: I, f: F) -> Result<(), E>
where
    T: Send,
    E: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [T]) -> Result<(), E> + Sync + Send,
{
    if width == 0 {
        return Ok(());
    }
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(width)
            .enumerate()
            .try_for_each_init(init, |s, (i, c)| f(s, i, c))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut s = init();
        out.chunks_mut(width)
            .enumerate()
            .try_for_each(|(i, c)| f(&mut s, i, c))
    }
}
