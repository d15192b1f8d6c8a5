//! Thin layer over rayon so every data-parallel loop has a sequential twin.
//!
//! With the `parallel` feature disabled the same functions run on plain
//! iterators. Callers must not rely on evaluation order: every helper here
//! returns results in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map every element, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map every index in `0..len`, preserving order.
pub fn map_range<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Map fixed-size chunks, preserving chunk order. Chunk boundaries depend only
/// on `chunk`, never on the thread count.
pub fn map_chunks<T, R, F>(items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        items.par_chunks(chunk).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.chunks(chunk).map(f).collect()
    }
}

/// Count the elements satisfying `pred`.
pub fn count<T, F>(items: &[T], pred: F) -> usize
where
    T: Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().filter(|x| pred(x)).count()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().filter(|x| pred(x)).count()
    }
}

/// Keep the elements satisfying `pred`, preserving order.
pub fn filter<T, F>(items: &[T], pred: F) -> Vec<T>
where
    T: Sync + Send + Clone,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().filter(|x| pred(x)).cloned().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().filter(|x| pred(x)).cloned().collect()
    }
}

pub fn sort_unstable<T: Ord + Send>(items: &mut [T]) {
    #[cfg(feature = "parallel")]
    {
        items.par_sort_unstable();
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.sort_unstable();
    }
}

pub fn sort_unstable_by<T, F>(items: &mut [T], cmp: F)
where
    T: Send,
    F: Fn(&T, &T) -> std::cmp::Ordering + Sync,
{
    #[cfg(feature = "parallel")]
    {
        items.par_sort_unstable_by(cmp);
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.sort_unstable_by(cmp);
    }
}

/// Number of worker threads the current context will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
