//! Desk-scale experiments: speedup trials, threshold sweeps and metrics.

pub mod metrics;
pub mod sweep;
pub mod synth;
pub mod trials;

pub use metrics::{dice, dice_labels, format_metric, psnr};
pub use sweep::{run_threshold_sweep, sweep_to_csv, SweepResult, SweepRow, DEFAULT_SWEEP};
pub use synth::{brain_like, distinct, nan_mask, place_nans, uniform, BrainLike, Placement};
pub use trials::{run_speedup_trials, trials_to_csv, TrialConfig, TrialResult};

use crate::error::{Error, Result};

/// Comment line opening every CSV this crate writes.
pub fn csv_preamble(seed: u64, threads: usize) -> String {
    format!(
        "# nanskip {} seed={seed} threads={threads}\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// Thread count a pool built with `threads` will have.
pub fn resolve_threads(threads: usize) -> usize {
    if threads == 0 {
        rayon::current_num_threads()
    } else {
        threads
    }
}

/// Runs `f` inside a dedicated rayon pool of `threads` workers (0: default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
