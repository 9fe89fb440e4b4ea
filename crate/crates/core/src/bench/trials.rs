//! Wall-clock comparison of `conv2d` and `nan_conv2d` over NaN density.

use std::time::Instant;

use serde::Serialize;

use crate::bench::synth::{self, Placement, DEFAULT_BLOCK};
use crate::bench::{csv_preamble, with_threads};
use crate::convolution::{self, ConvConfig, DEFAULT_T2};
use crate::error::{Error, Result};
use crate::network::zoo::random_kernel;
use crate::rng::Rng;
use crate::tensor::{Kernel4, Shape4, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    /// Side lengths of the square `(1, 1, s, s)` inputs.
    pub sizes: Vec<usize>,
    pub densities: Vec<f64>,
    pub placement: Placement,
    pub block: usize,
    pub t2s: Vec<f64>,
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Output channels of the 3x3 kernel.
    pub c_out: usize,
    /// Worker threads for both convolutions; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            sizes: vec![256],
            densities: vec![0.0, 0.33, 0.5, 0.75, 0.9],
            placement: Placement::Block,
            block: DEFAULT_BLOCK,
            t2s: vec![DEFAULT_T2],
            reps: 5,
            warmup: 1,
            seed: 0,
            c_out: 16,
            threads: 0,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.densities.is_empty() || self.t2s.is_empty() {
            return Err(Error::Config("sizes, densities and t2 must be non-empty".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::Config("sizes must be positive".into()));
        }
        if let Some(d) = self.densities.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::Config(format!("density {d} outside [0, 1]")));
        }
        if let Some(t) = self.t2s.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Config(format!("t2 {t} outside [0, 1]")));
        }
        if self.reps < 3 {
            return Err(Error::Config(format!("reps must be at least 3, got {}", self.reps)));
        }
        if self.warmup < 1 {
            return Err(Error::Config("warmup must be at least 1".into()));
        }
        if self.c_out == 0 || self.block == 0 {
            return Err(Error::Config("c_out and block must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub size: usize,
    pub density: f64,
    pub placement: String,
    pub t2: f64,
    /// Fraction of NaN elements actually generated.
    pub nan_fraction: f64,
    pub skipped: u64,
    pub total: u64,
    pub std_min_ns: u64,
    pub std_mean_ns: u64,
    pub nan_min_ns: u64,
    pub nan_mean_ns: u64,
}

impl TrialResult {
    pub fn skip_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.skipped as f64 / self.total as f64
        }
    }

    /// Minimum standard time over minimum NaN-convolution time.
    pub fn speedup(&self) -> f64 {
        self.std_min_ns.max(1) as f64 / self.nan_min_ns.max(1) as f64
    }
}

/// Input used for the `(size, density)` cell; independent of `t2`.
pub fn trial_input(cfg: &TrialConfig, size_index: usize, density_index: usize) -> Result<Tensor4> {
    let stream = (size_index * cfg.densities.len() + density_index) as u64;
    let mut rng = Rng::stream(cfg.seed, stream);
    let side = cfg.sizes[size_index];
    let clean = synth::uniform((1, 1, side, side), &mut rng);
    synth::place_nans(&clean, cfg.densities[density_index], cfg.placement, cfg.block, &mut rng)
}

pub fn trial_kernel(cfg: &TrialConfig) -> Kernel4 {
    random_kernel(Shape4::new(cfg.c_out, 1, 3, 3), cfg.seed, true)
}

fn time_ns(f: impl FnOnce() -> Result<Tensor4>) -> Result<u64> {
    let t0 = Instant::now();
    let out = f()?;
    let ns = t0.elapsed().as_nanos() as u64;
    std::hint::black_box(out);
    Ok(ns)
}

/// Times both convolutions on every `(size, density, t2)` cell.
///
/// Each cell runs `warmup` untimed pairs, then `reps` interleaved timed
/// pairs. Cells run one after another inside a pool of `cfg.threads`.
pub fn run_speedup_trials(cfg: &TrialConfig) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let kernel = trial_kernel(cfg);
        let mut results = Vec::new();
        for (si, &size) in cfg.sizes.iter().enumerate() {
            for (di, &density) in cfg.densities.iter().enumerate() {
                let x = trial_input(cfg, si, di)?;
                let nan_fraction = x.nan_count() as f64 / x.len() as f64;
                for &t2 in &cfg.t2s {
                    let conv = ConvConfig::new(1, 1).with_t2(t2).with_seed(cfg.seed);
                    let (_, stats) = convolution::nan_conv2d_with_stats(&x, &kernel, &conv)?;
                    for _ in 0..cfg.warmup {
                        std::hint::black_box(convolution::conv2d(&x, &kernel, &conv)?);
                        std::hint::black_box(convolution::nan_conv2d(&x, &kernel, &conv)?);
                    }
                    let mut std_ns = Vec::with_capacity(cfg.reps);
                    let mut nan_ns = Vec::with_capacity(cfg.reps);
                    for _ in 0..cfg.reps {
                        std_ns.push(time_ns(|| convolution::conv2d(&x, &kernel, &conv))?);
                        nan_ns.push(time_ns(|| convolution::nan_conv2d(&x, &kernel, &conv))?);
                    }
                    let mean = |v: &[u64]| v.iter().sum::<u64>() / v.len() as u64;
                    results.push(TrialResult {
                        size,
                        density,
                        placement: cfg.placement.to_string(),
                        t2,
                        nan_fraction,
                        skipped: stats.skipped,
                        total: stats.total,
                        std_min_ns: *std_ns.iter().min().expect("reps >= 3"),
                        std_mean_ns: mean(&std_ns),
                        nan_min_ns: *nan_ns.iter().min().expect("reps >= 3"),
                        nan_mean_ns: mean(&nan_ns),
                    });
                }
            }
        }
        Ok(results)
    })?
}

pub const TRIAL_CSV_HEADER: &str =
    "size,density,placement,t2,nan_fraction,skipped,total,skip_ratio,std_min_ns,std_mean_ns,nan_min_ns,nan_mean_ns,speedup";

pub fn trials_to_csv(results: &[TrialResult], seed: u64, threads: usize) -> String {
    let mut out = csv_preamble(seed, threads);
    out.push_str(TRIAL_CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{},{:.6},{},{},{},{},{:.4}\n",
            r.size,
            r.density,
            r.placement,
            r.t2,
            r.nan_fraction,
            r.skipped,
            r.total,
            r.skip_ratio(),
            r.std_min_ns,
            r.std_mean_ns,
            r.nan_min_ns,
            r.nan_mean_ns,
            r.speedup()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrialConfig {
        TrialConfig {
            sizes: vec![32],
            densities: vec![0.0, 0.9],
            t2s: vec![0.5, 1.0],
            reps: 3,
            threads: 1,
            ..TrialConfig::default()
        }
    }

    #[test]
    fn grid_and_invariants() {
        let res = run_speedup_trials(&small()).unwrap();
        assert_eq!(res.len(), 4);
        for r in &res {
            assert!(r.speedup() > 0.0);
            assert!((0.0..=1.0).contains(&r.skip_ratio()));
        }
        assert_eq!(res[0].skipped, 0);
        assert!(res[2].skip_ratio() > 0.7);
    }

    #[test]
    fn skip_counts_match_recount() {
        let cfg = small();
        let res = run_speedup_trials(&cfg).unwrap();
        let k = trial_kernel(&cfg);
        for r in &res {
            let di = cfg.densities.iter().position(|&d| d == r.density).unwrap();
            let x = trial_input(&cfg, 0, di).unwrap();
            let conv = ConvConfig::new(1, 1).with_t2(r.t2);
            assert_eq!(convolution::count_skips(&x, &k, &conv).unwrap(), (r.skipped, r.total));
        }
    }

    #[test]
    fn validation() {
        assert!(TrialConfig { reps: 2, ..small() }.validate().is_err());
        assert!(TrialConfig { warmup: 0, ..small() }.validate().is_err());
        assert!(TrialConfig {
            densities: vec![1.2],
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn csv_shape() {
        let csv = trials_to_csv(&run_speedup_trials(&small()).unwrap(), 0, 1);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# nanskip"));
        assert_eq!(lines[1], TRIAL_CSV_HEADER);
        assert_eq!(lines.len(), 6);
    }
}
