//! Monte Carlo perturbation and significant-bit maps.
//!
//! Every finite value is scaled by `1 + d` with `d ~ U(-2^-t, 2^-t)` in double
//! precision and then stochastically rounded back to `f32` (up or down with
//! probability proportional to proximity). With `t = 24` this moves a value by
//! at most one unit in the last place, which is enough to flip the argmax of
//! a window whose entries are tied.
//!
//! Significance across `n` perturbed samples of an element uses the mean `mu`
//! and sample standard deviation `sigma`:
//! `s = clamp(-log2(sigma / |mu|), 0, 24)`, with `s = 24` when `sigma = 0`,
//! `s = 0` when `mu = 0 < sigma`, and `s = 0` when any sample is NaN.
//! Multiply by `log10(2)` for decimal digits.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{forward_observed, ForwardOptions, LayerGraph, Mode};
use crate::rng::Rng;
use crate::tensor::{Shape4, Tensor4};

pub const MAX_BITS: f32 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McaConfig {
    pub iterations: usize,
    /// Virtual precision in mantissa bits.
    pub precision: u32,
    pub seed: u64,
}

impl Default for McaConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            precision: 24,
            seed: 0,
        }
    }
}

impl McaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 2 {
            return Err(Error::Config("MCA needs at least 2 iterations".into()));
        }
        if !(1..=24).contains(&self.precision) {
            return Err(Error::Config(format!(
                "virtual precision must be in 1..=24, got {}",
                self.precision
            )));
        }
        Ok(())
    }
}

/// Rounds `exact` to one of its two neighbouring `f32` values, picking the
/// upper one with probability proportional to its proximity.
fn round_stochastic(exact: f64, rng: &mut Rng) -> f32 {
    let nearest = exact as f32;
    if !nearest.is_finite() || f64::from(nearest) == exact {
        return nearest;
    }
    let (lo, hi) = if f64::from(nearest) < exact {
        (nearest, nearest.next_up())
    } else {
        (nearest.next_down(), nearest)
    };
    let p_up = (exact - f64::from(lo)) / (f64::from(hi) - f64::from(lo));
    if rng.unit_f64() < p_up {
        hi
    } else {
        lo
    }
}

/// Relative random perturbation of every finite non-zero element.
pub fn perturb(x: &Tensor4, precision: u32, rng: &mut Rng) -> Tensor4 {
    let bound = (-(precision as f64)).exp2();
    let data = x
        .data()
        .iter()
        .map(|&v| {
            if v == 0.0 || !v.is_finite() {
                return v;
            }
            let d = rng.symmetric_open(bound);
            let out = round_stochastic(f64::from(v) * (1.0 + d), rng);
            if out.is_finite() {
                out
            } else {
                v
            }
        })
        .collect();
    Tensor4::from_parts(x.shape(), data).expect("shape unchanged")
}

/// Per-element significant bits, in `[0, 24]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigDigitMap {
    bits: Tensor4,
}

impl SigDigitMap {
    pub fn bits(&self) -> &Tensor4 {
        &self.bits
    }

    pub fn shape(&self) -> Shape4 {
        self.bits.shape()
    }

    pub fn mean(&self) -> f64 {
        self.mean_where(|_| true).unwrap_or(f64::from(MAX_BITS))
    }

    /// Mean over the flat offsets selected by `keep`; `None` if none are.
    pub fn mean_where(&self, mut keep: impl FnMut(usize) -> bool) -> Option<f64> {
        let (sum, count) = self
            .bits
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .fold((0.0f64, 0usize), |(s, c), (_, &b)| (s + f64::from(b), c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// Binary PGM (P5) of plane `(n, c)`, 8-bit, pixel = bits x 10.
    pub fn to_pgm(&self, n: usize, c: usize) -> Vec<u8> {
        let s = self.bits.shape();
        let mut out = format!("P5\n{} {}\n255\n", s.w, s.h).into_bytes();
        out.extend(
            self.bits
                .plane(n, c)
                .iter()
                .map(|&b| (b * 10.0).round().clamp(0.0, 255.0) as u8),
        );
        out
    }

    /// Character heatmap of plane `(n, c)`: ' ' is 0 bits, '@' is 24.
    pub fn to_ascii(&self, n: usize, c: usize) -> String {
        const RAMP: &[u8] = b" .:-=+*#%@";
        let s = self.bits.shape();
        let mut out = String::with_capacity((s.w + 1) * s.h);
        for row in self.bits.plane(n, c).chunks(s.w.max(1)) {
            for &b in row {
                let level = ((b / MAX_BITS) * (RAMP.len() - 1) as f32).round() as usize;
                out.push(RAMP[level.min(RAMP.len() - 1)] as char);
            }
            out.push('\n');
        }
        out
    }
}

fn element_bits(values: &[f32]) -> f32 {
    if values.iter().any(|v| v.is_nan()) {
        return 0.0;
    }
    if values.iter().any(|v| v.is_infinite()) {
        let same = values.iter().all(|v| v.to_bits() == values[0].to_bits());
        return if same { MAX_BITS } else { 0.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = values.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return MAX_BITS;
    }
    if mean == 0.0 {
        return 0.0;
    }
    (-(sd / mean.abs()).log2()).clamp(0.0, f64::from(MAX_BITS)) as f32
}

/// Significant bits per element across `samples`.
pub fn significant_bits(samples: &[Tensor4]) -> Result<SigDigitMap> {
    let first = samples.first().ok_or_else(|| Error::Config("no samples".into()))?;
    if samples.len() < 2 {
        return Err(Error::Config("significant bits need at least 2 samples".into()));
    }
    let shape = first.shape();
    if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
        return Err(Error::shape(format!(
            "sample shape {} differs from {shape}",
            bad.shape()
        )));
    }
    let mut column = vec![0.0f32; samples.len()];
    let bits = (0..shape.numel())
        .map(|i| {
            for (c, s) in column.iter_mut().zip(samples) {
                *c = s.data()[i];
            }
            element_bits(&column)
        })
        .collect();
    Ok(SigDigitMap {
        bits: Tensor4::from_parts(shape, bits)?,
    })
}

/// Significance maps of the perturbed input and of every layer output.
#[derive(Debug, Clone)]
pub struct McaReport {
    pub input: SigDigitMap,
    pub layers: Vec<SigDigitMap>,
    /// `samples[i][layer]`: output of `layer` in iteration `i`.
    pub samples: Vec<Vec<Tensor4>>,
}

/// Runs `graph` `cfg.iterations` times, perturbing the input and every layer
/// output, and measures per-layer significance.
///
/// Iteration `i` draws from RNG stream `i` of `cfg.seed`.
pub fn mca_run(graph: &LayerGraph, input: &Tensor4, mode: Mode, cfg: &McaConfig) -> Result<McaReport> {
    cfg.validate()?;
    let opts = ForwardOptions::new(mode).recording();
    let runs: Vec<(Tensor4, Vec<Tensor4>)> = (0..cfg.iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::stream(cfg.seed, i as u64);
            let x0 = perturb(input, cfg.precision, &mut rng);
            let out = forward_observed(graph, &x0, &opts, |_, t| perturb(&t, cfg.precision, &mut rng))?;
            Ok((x0, out.intermediates))
        })
        .collect::<Result<_>>()?;

    let inputs: Vec<Tensor4> = runs.iter().map(|(x, _)| x.clone()).collect();
    let samples: Vec<Vec<Tensor4>> = runs.into_iter().map(|(_, l)| l).collect();
    let layers = (0..graph.layers().len())
        .map(|l| {
            let per_iter: Vec<Tensor4> = samples.iter().map(|s| s[l].clone()).collect();
            significant_bits(&per_iter)
        })
        .collect::<Result<_>>()?;
    Ok(McaReport {
        input: significant_bits(&inputs)?,
        layers,
        samples,
    })
}
