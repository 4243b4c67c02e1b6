//! Worker-count control shared by the parallel kernels.

use log::warn;

/// Environment variable capping the number of worker threads; `0` or unset
/// means one per core.
pub const THREADS_ENV: &str = "GPR_VOLUME_THREADS";

pub fn worker_threads() -> usize {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) => n,
            Err(_) => {
                warn!("ignoring {THREADS_ENV}={s:?}: not a non-negative integer");
                0
            }
        },
        Err(_) => 0,
    }
}

/// Runs `f` on a pool sized by [`worker_threads`].
pub(crate) fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(e) => {
            warn!("thread pool unavailable ({e}); using the global pool");
            f()
        }
    }
}
