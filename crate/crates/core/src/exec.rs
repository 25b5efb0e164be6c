//! Trial scheduling: a rayon pool when the `parallel` feature is on, a plain
//! loop otherwise. Results always come back in trial-index order.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// `threads: None` uses the global pool (one worker per core).
    Parallel { threads: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { threads: None }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// `Some(1)` means sequential; anything else parallel with that cap.
    pub fn with_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Sequential,
            t => Execution::Parallel { threads: t },
        }
    }
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_trials<T, F>(n: u64, exec: Execution, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel { threads } => parallel::map(n, threads, f),
    }
}

#[cfg(feature = "parallel")]
mod parallel {
    use rayon::prelude::*;

    use crate::error::{Error, Result};

    pub(super) fn map<T, F>(n: u64, threads: Option<usize>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        let run = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
        match threads {
            None => run(),
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                .install(run),
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod parallel {
    use crate::error::Result;

    pub(super) fn map<T, F>(n: u64, _threads: Option<usize>, f: F) -> Result<Vec<T>>
    where
        F: Fn(u64) -> Result<T>,
    {
        (0..n).map(f).collect()
    }
}
