//! Pluggable execution of independent per-index jobs.
//!
//! Per-sample work (scenario generation, batch forward/backward, inference)
//! is embarrassingly parallel but must produce output identical to a
//! sequential run. The contract here is that results come back in index
//! order; any reduction the caller performs over that `Vec` is therefore
//! independent of how the jobs were scheduled.

use alloc::boxed::Box;
use alloc::vec::Vec;

/// Runs `n` independent jobs and returns their results in index order.
pub trait TaskPool {
    fn run_boxed(&self, n: usize, job: &(dyn Fn(usize) -> Box<dyn core::any::Any + Send> + Sync))
        -> Vec<Box<dyn core::any::Any + Send>>;
}

/// Typed front end over [`TaskPool::run_boxed`].
pub fn run_indexed<T: Send + 'static>(
    pool: &dyn TaskPool,
    n: usize,
    job: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    pool.run_boxed(n, &move |i| Box::new(job(i)) as Box<dyn core::any::Any + Send>)
        .into_iter()
        .map(|b| *b.downcast::<T>().expect("task pool returned foreign type"))
        .collect()
}

/// Runs every job on the calling thread, in order.
#[derive(Debug, Default, Clone, Copy)]
pub struct SequentialPool;

impl TaskPool for SequentialPool {
    fn run_boxed(
        &self,
        n: usize,
        job: &(dyn Fn(usize) -> Box<dyn core::any::Any + Send> + Sync),
    ) -> Vec<Box<dyn core::any::Any + Send>> {
        (0..n).map(job).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_preserves_index_order() {
        let out = run_indexed(&SequentialPool, 5, |i| i * 10);
        assert_eq!(out, alloc::vec![0, 10, 20, 30, 40]);
    }
}
