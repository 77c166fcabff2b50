//! Order-preserving data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) `ExecMode::Parallel` runs on rayon;
//! without it every mode runs sequentially. Results are always returned in
//! input order, so callers never depend on completion order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    /// Rayon with an optional bound on worker threads (`None` = global pool).
    #[default]
    Parallel,
}

/// Execution settings shared by batch operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Exec {
    pub mode: ExecMode,
    pub jobs: Option<usize>,
}

impl Exec {
    pub const SEQUENTIAL: Exec = Exec { mode: ExecMode::Sequential, jobs: None };

    pub fn parallel(jobs: Option<usize>) -> Self {
        Exec { mode: ExecMode::Parallel, jobs }
    }

    /// True when work will actually fan out.
    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && self.mode == ExecMode::Parallel && self.jobs != Some(1)
    }

    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        if !self.is_parallel() {
            return items.iter().map(f).collect();
        }
        self.run_parallel(items, f)
    }

    #[cfg(feature = "parallel")]
    fn run_parallel<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self.jobs {
            Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(e) => {
                    log::warn!("falling back to the global rayon pool: {e}");
                    items.par_iter().map(f).collect()
                }
            },
            None => items.par_iter().map(f).collect(),
        }
    }

    #[cfg(not(feature = "parallel"))]
    fn run_parallel<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        F: Fn(&T) -> U,
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let items: Vec<u64> = (0..10_000).collect();
        let seq = Exec::SEQUENTIAL.map(&items, |x| x * x + 1);
        let par = Exec::parallel(None).map(&items, |x| x * x + 1);
        let bounded = Exec::parallel(Some(3)).map(&items, |x| x * x + 1);
        assert_eq!(seq, par);
        assert_eq!(seq, bounded);
    }

    #[test]
    fn single_job_is_sequential() {
        assert!(!Exec::parallel(Some(1)).is_parallel());
        assert!(!Exec::SEQUENTIAL.is_parallel());
    }
}
