//! Independent runs in parallel, one RNG stream per run.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::{stream_rng, SimRng};

/// Runs `job(run, rng)` for `run in 0..runs` on the current rayon pool.
/// Run `k` always gets stream `k` of `seed`, so the output does not depend
/// on the thread count.
pub fn run_ensemble<T, F>(seed: u64, runs: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> Result<T> + Sync,
{
    (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream_rng(seed, run as u64);
            job(run, &mut rng)
        })
        .collect()
}
