//! Threaded task pool. Work items are claimed through an atomic cursor and
//! results land in their input slots, so outputs come back in index order
//! and are bit-identical to a sequential run regardless of worker count.

use std::any::Any;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use mmbeam_core::exec::TaskPool;

pub struct ThreadPool {
    workers: usize,
}

impl ThreadPool {
    pub fn new(workers: usize) -> Self {
        ThreadPool { workers: workers.max(1) }
    }

    /// Worker count from `BEAM_THREADS`, defaulting to the machine's
    /// available parallelism.
    pub fn from_env() -> Self {
        let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let workers = std::env::var("BEAM_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .unwrap_or(available);
        ThreadPool::new(workers)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl TaskPool for ThreadPool {
    fn run_boxed(
        &self,
        n: usize,
        job: &(dyn Fn(usize) -> Box<dyn Any + Send> + Sync),
    ) -> Vec<Box<dyn Any + Send>> {
        let workers = self.workers.min(n);
        if workers <= 1 {
            return (0..n).map(job).collect();
        }
        let slots: Vec<Mutex<Option<Box<dyn Any + Send>>>> =
            (0..n).map(|_| Mutex::new(None)).collect();
        let cursor = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let out = job(i);
                    *slots[i].lock().expect("result slot") = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("lock").expect("every job ran"))
            .collect()
    }
}
