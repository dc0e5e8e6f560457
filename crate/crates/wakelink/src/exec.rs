//! Rayon-backed [`Executor`].

use rayon::prelude::*;
use wakelink_core::Executor;

use crate::{Error, Result};

/// A dedicated thread pool. `map` returns results in index order, so every
/// reduction downstream sees the same sequence as with `Sequential`.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `None` uses one worker per logical core.
    pub fn new(workers: Option<usize>) -> Result<Self> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            if n == 0 {
                return Err(Error::Config("--workers must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        let pool = b
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wakelink_core::Sequential;

    #[test]
    fn matches_sequential_order() {
        let pool = Pool::new(Some(3)).unwrap();
        let f = |i: usize| (i as f64).sqrt() * 1e-3 + i as f64;
        assert_eq!(pool.map(1000, f), Sequential.map(1000, f));
    }

    #[test]
    fn zero_workers_is_a_config_error() {
        assert_eq!(Pool::new(Some(0)).err().unwrap().exit_code(), 2);
    }
}
