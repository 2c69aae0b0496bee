//! Execution backends for per-particle work.
//!
//! Every backend returns results in particle order and computes each
//! particle's result with the same arithmetic, so outputs do not depend on
//! the backend or on the number of workers.

use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use thiserror::Error;

use crate::lmm::{propagate_interval_batched, Integrator, LmmError, PropagationResult};
use crate::models::OdeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    /// Fixed pool of worker threads with static contiguous partitioning.
    Parallel(usize),
    /// Stacked propagation through the aggregate block-diagonal Newton solve.
    Batched,
}

impl Backend {
    pub fn label(&self) -> &'static str {
        match self {
            Backend::Sequential => "seq",
            Backend::Parallel(_) => "par",
            Backend::Batched => "batch",
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("could not build thread pool: {0}")]
    Pool(String),
    #[error("worker panicked while processing particle {particle}: {message}")]
    WorkerPanic { particle: usize, message: String },
}

/// Wall time per sampler phase, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub propagate: f64,
    pub resample: f64,
    pub proliferate: f64,
    pub repropagate: f64,
    pub weights: f64,
}

impl PhaseTimes {
    pub fn total(&self) -> f64 {
        self.propagate + self.resample + self.proliferate + self.repropagate + self.weights
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkReport {
    pub phases: PhaseTimes,
    /// CPU seconds spent on particle work by each worker.
    pub busy: Vec<f64>,
}

/// Splits `0..n` into `workers` contiguous chunks whose sizes differ by at
/// most one, larger chunks first.
pub fn partition(n: usize, workers: usize) -> Vec<Range<usize>> {
    let workers = workers.max(1);
    let (base, extra) = (n / workers, n % workers);
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// CPU time consumed by the calling thread, in seconds.
pub fn thread_cpu_time() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

pub struct Executor {
    backend: Backend,
    pool: Option<ThreadPool>,
    work_stealing: bool,
    busy: Mutex<Vec<f64>>,
}

impl Executor {
    /// Parallel backends create their pool here; it is reused for every call.
    /// The batched backend uses a pool sized to the machine for its internal
    /// data-parallel kernels.
    pub fn new(backend: Backend) -> Result<Self, ExecError> {
        let threads = match backend {
            Backend::Sequential => None,
            Backend::Parallel(0) => return Err(ExecError::NoWorkers),
            Backend::Parallel(w) => Some(w),
            Backend::Batched => Some(std::thread::available_parallelism().map_or(1, |n| n.get())),
        };
        let pool = threads
            .map(|n| {
                ThreadPoolBuilder::new()
                    .num_threads(n)
                    .thread_name(|i| format!("pfsmc-worker-{i}"))
                    .build()
                    .map_err(|e| ExecError::Pool(e.to_string()))
            })
            .transpose()?;
        let slots = threads.unwrap_or(1);
        Ok(Self { backend, pool, work_stealing: false, busy: Mutex::new(vec![0.0; slots]) })
    }

    /// Dynamic scheduling instead of static chunks, for workloads whose cost
    /// varies per particle (adaptive step sizes).
    pub fn with_work_stealing(mut self, on: bool) -> Self {
        self.work_stealing = on;
        self
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, ThreadPool::current_num_threads)
    }

    pub fn work_stealing(&self) -> bool {
        self.work_stealing
    }

    /// Busy seconds per worker accumulated since the last call.
    pub fn take_busy(&self) -> Vec<f64> {
        let mut busy = self.busy.lock().expect("busy counters poisoned");
        let out = busy.clone();
        busy.iter_mut().for_each(|b| *b = 0.0);
        out
    }

    fn add_busy(&self, worker: usize, secs: f64) {
        let mut busy = self.busy.lock().expect("busy counters poisoned");
        if let Some(b) = busy.get_mut(worker) {
            *b += secs;
        }
    }

    /// Runs `task(n)` for every particle and returns the results in order.
    pub fn map_particles<T, F>(&self, n: usize, task: F) -> Result<Vec<T>, ExecError>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let guarded = |i: usize| -> Result<T, ExecError> {
            catch_unwind(AssertUnwindSafe(|| task(i)))
                .map_err(|p| ExecError::WorkerPanic { particle: i, message: panic_message(p) })
        };
        match (&self.pool, self.backend) {
            (None, _) => {
                let start = thread_cpu_time();
                let out = (0..n).map(guarded).collect();
                self.add_busy(0, thread_cpu_time() - start);
                out
            }
            (Some(pool), Backend::Parallel(workers)) if !self.work_stealing => {
                let chunks = partition(n, workers);
                let pieces: Vec<Result<Vec<T>, ExecError>> = pool.broadcast(|ctx| {
                    let start = thread_cpu_time();
                    let out = chunks[ctx.index()].clone().map(guarded).collect();
                    self.add_busy(ctx.index(), thread_cpu_time() - start);
                    out
                });
                let mut all = Vec::with_capacity(n);
                for piece in pieces {
                    all.extend(piece?);
                }
                Ok(all)
            }
            (Some(pool), _) => pool.install(|| {
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let start = thread_cpu_time();
                        let r = guarded(i);
                        self.add_busy(rayon::current_thread_index().unwrap_or(0), thread_cpu_time() - start);
                        r
                    })
                    .collect()
            }),
        }
    }

    /// Propagates every particle from `x0s[n]` with parameters `thetas[n]`
    /// over `[t0, t1]`. The batched backend goes through the stacked path for
    /// fixed-step integrators; adaptive integration is per particle on every
    /// backend because step sequences differ between particles.
    pub fn propagate(
        &self,
        model: &dyn OdeModel,
        integrator: &Integrator,
        thetas: &[Vec<f64>],
        x0s: &[Vec<f64>],
        t0: f64,
        t1: f64,
    ) -> Result<Vec<Result<PropagationResult, LmmError>>, ExecError> {
        match (self.backend, integrator) {
            (Backend::Batched, Integrator::Fixed { scheme, h, newton }) => {
                let pool = self.pool.as_ref().expect("batched backend owns a pool");
                let start = Instant::now();
                let out = pool.install(|| propagate_interval_batched(model, thetas, x0s, t0, t1, *h, scheme, *newton));
                self.add_busy(0, start.elapsed().as_secs_f64());
                Ok(match out {
                    Ok(v) => v,
                    // configuration problems affect every particle alike
                    Err(e) => vec![Err(e); thetas.len()],
                })
            }
            _ => self.map_particles(thetas.len(), |i| integrator.propagate(model, &thetas[i], &x0s[i], t0, t1)),
        }
    }
}

/// Batched propagation of an ensemble over one interval; see
/// [`Executor::propagate`].
pub fn run_batched_propagation(
    model: &dyn OdeModel,
    integrator: &Integrator,
    thetas: &[Vec<f64>],
    x0s: &[Vec<f64>],
    t0: f64,
    t1: f64,
) -> Result<Vec<Result<PropagationResult, LmmError>>, ExecError> {
    Executor::new(Backend::Batched)?.propagate(model, integrator, thetas, x0s, t0, t1)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmm::propagate_interval;
    use crate::models::MetabolicModel;

    #[test]
    fn partition_sizes() {
        let sizes: Vec<usize> = partition(10, 4).iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        let p = partition(10, 4);
        assert_eq!(p[0].start, 0);
        assert_eq!(p[3].end, 10);
        assert_eq!(partition(3, 5).iter().map(|r| r.len()).collect::<Vec<_>>(), vec![1, 1, 1, 0, 0]);
    }

    #[test]
    fn all_backends_agree() {
        let task = |i: usize| (i as f64).sqrt().sin();
        let expected: Vec<f64> = (0..37).map(task).collect();
        for backend in [Backend::Sequential, Backend::Parallel(1), Backend::Parallel(3), Backend::Batched] {
            let ex = Executor::new(backend).unwrap();
            assert_eq!(ex.map_particles(37, task).unwrap(), expected);
            let ex = Executor::new(backend).unwrap().with_work_stealing(true);
            assert_eq!(ex.map_particles(37, task).unwrap(), expected);
        }
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(matches!(Executor::new(Backend::Parallel(0)), Err(ExecError::NoWorkers)));
    }

    #[test]
    fn panic_reports_particle() {
        let ex = Executor::new(Backend::Parallel(2)).unwrap();
        let r = ex.map_particles(8, |i| {
            if i == 5 {
                panic!("boom");
            }
            i
        });
        match r {
            Err(ExecError::WorkerPanic { particle, message }) => {
                assert_eq!(particle, 5);
                assert!(message.contains("boom"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn busy_time_is_recorded_per_worker() {
        let ex = Executor::new(Backend::Parallel(2)).unwrap();
        ex.map_particles(4, |i| (0..200_000).map(|k| ((k + i) as f64).sqrt()).sum::<f64>()).unwrap();
        let busy = ex.take_busy();
        assert_eq!(busy.len(), 2);
        assert!(busy.iter().all(|b| *b > 0.0));
        assert!(ex.take_busy().iter().all(|b| *b == 0.0));
    }

    #[test]
    fn batched_propagation_matches_per_particle() {
        let m = MetabolicModel::default();
        let thetas: Vec<Vec<f64>> = (0..8).map(|k| vec![1.5 + 0.1 * k as f64, 0.5, 1.0, 0.8]).collect();
        let x0s = vec![vec![0.5, 0.5, 1.0]; 8];
        let scheme: crate::lmm::LmmScheme = "bdf2".parse().unwrap();
        let integ = Integrator::fixed(scheme.clone(), 0.05);
        let out = run_batched_propagation(&m, &integ, &thetas, &x0s, 0.0, 0.2).unwrap();
        for i in 0..8 {
            let seq = propagate_interval(&m, &thetas[i], &x0s[i], 0.0, 0.2, 0.05, &scheme).unwrap();
            let b = out[i].as_ref().unwrap();
            let dev = b.state.iter().zip(&seq.state).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            assert_eq!(dev, 0.0);
            assert_eq!(b.gamma_diag, seq.gamma_diag);
        }
    }
}
