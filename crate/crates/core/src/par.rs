//! Data-parallel helpers.
//!
//! Every kernel that fans out over nodes or posts goes through [`Execution`].
//! With the `parallel` feature (on by default) `Execution::Parallel` runs on
//! the rayon pool; without it both variants run sequentially. Per-item work
//! is independent and any reduction happens sequentially afterwards, so both
//! variants produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// Whether work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `(0..n).map(f).collect()`, possibly in parallel. Output order is index order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// `items.iter().map(f).collect()`, possibly in parallel.
    pub fn map_slice<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Indices in `0..n` for which `pred` holds, ascending.
    pub fn filter_range<F>(self, n: usize, pred: F) -> Vec<u32>
    where
        F: Fn(usize) -> bool + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n)
                .into_par_iter()
                .filter(|&i| pred(i))
                .map(|i| i as u32)
                .collect();
        }
        (0..n).filter(|&i| pred(i)).map(|i| i as u32).collect()
    }

    /// Keeps the entries of a sorted id list that satisfy `pred`, preserving order.
    pub fn filter_ids<F>(self, ids: &[u32], pred: F) -> Vec<u32>
    where
        F: Fn(u32) -> bool + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return ids.par_iter().copied().filter(|&i| pred(i)).collect();
        }
        ids.iter().copied().filter(|&i| pred(i)).collect()
    }
}
