//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature the `map` family runs on the rayon pool;
//! without it, or through the `_seq` variants, work runs on the caller's
//! thread. Both produce results in input order.

use crate::error::{Error, Result};

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Size of the worker pool that [`map`] will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Sizes the global pool; only the first call has an effect.
pub fn init_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("thread count must be positive"));
    }
    #[cfg(feature = "parallel")]
    {
        // A pool that already exists keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn map_seq<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    map_seq(items, f)
}

/// Like [`map`], stopping at the first error in input order.
pub fn try_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    map(items, f).into_iter().collect()
}

pub fn try_map_seq<T, R>(items: &[T], f: impl Fn(&T) -> Result<R>) -> Result<Vec<R>> {
    items.iter().map(f).collect()
}
