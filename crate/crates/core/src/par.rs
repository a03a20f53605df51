//! Trial-level parallelism.
//!
//! With the `parallel` feature, work is spread over the current rayon pool;
//! without it everything runs on the calling thread. Results always come back
//! in index order so aggregation is identical either way.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// `f(0), f(1), ..., f(count - 1)` in order.
pub fn map_indexed<T, F>(count: u64, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Applies `f` to consecutive index blocks of `chunk` (the last may be shorter).
/// Block boundaries depend only on `count` and `chunk`.
pub fn map_chunks<T, F>(count: u64, chunk: u64, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let blocks = count.div_ceil(chunk);
    map_indexed(blocks, exec, |b| {
        let start = b * chunk;
        f(start..(start + chunk).min(count))
    })
}

/// Runs `f` inside a pool of `threads` workers (0 = rayon default).
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}
