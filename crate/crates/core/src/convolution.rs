//! Dense 2D cross-correlation and its NaN-skipping counterpart.
//!
//! Both paths gather each input window into a scratch buffer in `(c, h, w)`
//! order and reduce it against every output filter with the same loop, so on
//! NaN-free input [`nan_conv2d`] is bit-identical to [`conv2d`].
//!
//! [`nan_conv2d`] additionally counts NaNs while gathering. A window whose NaN
//! ratio `r` reaches `t2` is skipped and every output channel at that position
//! becomes NaN. Windows below the threshold have their NaNs substituted (window
//! mean, or Gaussian draws around the window maximum) before the reduction.
//! A window of exactly one element (a 1x1 kernel over one channel) is NaN iff
//! that element is NaN, independent of `t2`.
//!
//! Output rows `(n, oh)` are independent and run on the ambient rayon pool.
//! Gaussian draws use RNG stream `n * out_h + oh` of `cfg.seed`, consumed in
//! window scan order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{canonicalize, ratio_of, Kernel4, Shape4, Tensor4, Window, CANONICAL_NAN};

pub const DEFAULT_T2: f64 = 0.5;
pub const DEFAULT_SIGMA: f64 = 1e-3;
pub const HISTOGRAM_BINS: usize = 10;

/// How NaNs in a window below the skip threshold are replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Substitution {
    /// Mean of the window's non-NaN elements.
    #[default]
    Mean,
    /// Independent draws from `Normal(max of non-NaN elements, sigma^2)`.
    Gaussian,
}

impl std::fmt::Display for Substitution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Substitution::Mean => "mean",
            Substitution::Gaussian => "gaussian",
        })
    }
}

impl std::str::FromStr for Substitution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" | "a" => Ok(Substitution::Mean),
            "gaussian" | "b" => Ok(Substitution::Gaussian),
            other => Err(Error::Config(format!("unknown substitution '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvConfig {
    pub stride: usize,
    pub padding: usize,
    /// Skip threshold on the window NaN ratio, in `[0, 1]`.
    pub t2: f64,
    pub substitution: Substitution,
    pub sigma: f64,
    /// Seed for Gaussian substitution.
    pub seed: u64,
}

impl Default for ConvConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            t2: DEFAULT_T2,
            substitution: Substitution::Mean,
            sigma: DEFAULT_SIGMA,
            seed: 0,
        }
    }
}

impl ConvConfig {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            ..Self::default()
        }
    }

    pub fn with_t2(mut self, t2: f64) -> Self {
        self.t2 = t2;
        self
    }

    pub fn with_substitution(mut self, substitution: Substitution) -> Self {
        self.substitution = substitution;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("conv stride must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.t2) {
            return Err(Error::Config(format!("t2 must lie in [0, 1], got {}", self.t2)));
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 || self.sigma.is_infinite() {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Output shape of convolving `input` with a kernel of shape `kernel`.
    pub fn output_shape(&self, input: Shape4, kernel: Shape4) -> Result<Shape4> {
        self.validate()?;
        if input.c != kernel.c {
            return Err(Error::shape(format!(
                "input has {} channels but kernel expects {}",
                input.c, kernel.c
            )));
        }
        let (ph, pw) = (input.h + 2 * self.padding, input.w + 2 * self.padding);
        if ph < kernel.h || pw < kernel.w {
            return Err(Error::shape(format!(
                "kernel {}x{} larger than padded input {ph}x{pw}",
                kernel.h, kernel.w
            )));
        }
        Ok(Shape4::new(
            input.n,
            kernel.n,
            (ph - kernel.h) / self.stride + 1,
            (pw - kernel.w) / self.stride + 1,
        ))
    }
}

/// Window accounting for one NaN-aware convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConvStats {
    /// Output spatial positions times batch size.
    pub total: u64,
    /// Positions emitted as NaN without computing.
    pub skipped: u64,
    /// Window NaN ratios in bins `[0, 0.1), ..., [0.9, 1.0]`.
    pub histogram: [u64; HISTOGRAM_BINS],
}

impl ConvStats {
    pub fn skip_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.skipped as f64 / self.total as f64
        }
    }

    pub fn merge(&mut self, other: &ConvStats) {
        self.total += other.total;
        self.skipped += other.skipped;
        for (a, b) in self.histogram.iter_mut().zip(other.histogram) {
            *a += b;
        }
    }

    fn record(&mut self, ratio: f64, skipped: bool) {
        self.total += 1;
        self.skipped += u64::from(skipped);
        self.histogram[histogram_bin(ratio)] += 1;
    }
}

pub fn histogram_bin(ratio: f64) -> usize {
    ((ratio * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    input: Shape4,
    out: Shape4,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new(x: &Tensor4, k: &Kernel4, cfg: &ConvConfig) -> Result<Self> {
        let out = cfg.output_shape(x.shape(), k.shape())?;
        Ok(Self {
            input: x.shape(),
            out,
            kh: k.kh(),
            kw: k.kw(),
            stride: cfg.stride,
            pad: cfg.padding,
        })
    }

    fn volume(&self) -> usize {
        self.input.c * self.kh * self.kw
    }

    fn rows(&self) -> usize {
        self.out.n * self.out.h
    }
}

/// Top-left input coordinate of the window at `(oh, ow)` and whether the
/// window lies entirely inside the input.
#[inline]
fn window_origin(g: &Geometry, oh: usize, ow: usize) -> (isize, isize, bool) {
    let h0 = (oh * g.stride) as isize - g.pad as isize;
    let w0 = (ow * g.stride) as isize - g.pad as isize;
    let interior = h0 >= 0 && w0 >= 0 && h0 as usize + g.kh <= g.input.h && w0 as usize + g.kw <= g.input.w;
    (h0, w0, interior)
}

/// Value at `(c, hi, wj)` of one batch item, zero outside the input.
#[inline]
fn padded(sample: &[f32], g: &Geometry, c: usize, hi: isize, wj: isize) -> f32 {
    let (h, w) = (g.input.h, g.input.w);
    if hi >= 0 && wj >= 0 && (hi as usize) < h && (wj as usize) < w {
        sample[(c * h + hi as usize) * w + wj as usize]
    } else {
        0.0
    }
}

/// Copies the window at `(oh, ow)` of one batch item into `buf`.
#[inline]
fn gather(sample: &[f32], g: &Geometry, oh: usize, ow: usize, buf: &mut [f32]) {
    let (h, w) = (g.input.h, g.input.w);
    let (h0, w0, interior) = window_origin(g, oh, ow);
    let mut p = 0;
    for c in 0..g.input.c {
        for i in 0..g.kh {
            let dst = &mut buf[p..p + g.kw];
            if interior {
                let start = (c * h + h0 as usize + i) * w + w0 as usize;
                for (d, &s) in dst.iter_mut().zip(&sample[start..start + g.kw]) {
                    *d = s;
                }
            } else {
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = padded(sample, g, c, h0 + i as isize, w0 + j as isize);
                }
            }
            p += g.kw;
        }
    }
}

/// NaN count of the window at `(oh, ow)`; padding counts as non-NaN.
#[inline]
fn window_nans(sample: &[f32], g: &Geometry, oh: usize, ow: usize) -> usize {
    let (h, w) = (g.input.h, g.input.w);
    let (h0, w0, interior) = window_origin(g, oh, ow);
    let mut nans = 0;
    for c in 0..g.input.c {
        for i in 0..g.kh {
            if interior {
                let start = (c * h + h0 as usize + i) * w + w0 as usize;
                nans += sample[start..start + g.kw].iter().filter(|v| v.is_nan()).count();
            } else {
                nans += (0..g.kw)
                    .filter(|&j| padded(sample, g, c, h0 + i as isize, w0 + j as isize).is_nan())
                    .count();
            }
        }
    }
    nans
}

/// Per input row `(n, c, h)`: does it hold a NaN?
fn nan_rows(x: &Tensor4) -> Vec<bool> {
    x.data()
        .chunks(x.shape().w.max(1))
        .map(|r| r.iter().any(|v| v.is_nan()))
        .collect()
}

/// True when no window of output row `(n, oh)` can touch a NaN.
fn row_is_clean(dirty: &[bool], g: &Geometry, n: usize, oh: usize) -> bool {
    let h0 = (oh * g.stride) as isize - g.pad as isize;
    let lo = (h0.max(0) as usize).min(g.input.h);
    let hi = ((h0 + g.kh as isize).max(0) as usize).clamp(lo, g.input.h);
    (0..g.input.c).all(|c| {
        let base = (n * g.input.c + c) * g.input.h;
        !dirty[base + lo..base + hi].contains(&true)
    })
}

/// `row[oc][ow] = sum_i window[i] * filter_oc[i] + bias[oc]`, summed in window order.
#[inline]
fn accumulate(window: &[f32], k: &Kernel4, row: &mut [f32], ow: usize, width: usize) {
    let bias = k.bias();
    for oc in 0..k.c_out() {
        let mut sum = 0.0f32;
        for (a, b) in window.iter().zip(k.filter(oc)) {
            sum += a * b;
        }
        if let Some(b) = bias {
            sum += b[oc];
        }
        row[oc * width + ow] = canonicalize(sum);
    }
}

/// Runs `per_row` for every output row in parallel and copies the
/// channel-major row buffers, pre-filled with `init`, into an NCHW tensor.
fn run_rows<F>(g: &Geometry, init: f32, per_row: F) -> Result<(Tensor4, ConvStats)>
where
    F: Fn(usize, usize, &mut [f32], &mut [f32]) -> ConvStats + Sync,
{
    let (c_out, width) = (g.out.c, g.out.w);
    let volume = g.volume();
    let rows: Vec<(Vec<f32>, ConvStats)> = (0..g.rows())
        .into_par_iter()
        .map_init(
            || vec![0.0f32; volume],
            |buf, row| {
                let mut out = vec![init; width * c_out];
                let stats = per_row(row / g.out.h, row % g.out.h, buf, &mut out);
                (out, stats)
            },
        )
        .collect();

    let mut data = vec![0.0f32; g.out.numel()];
    let mut stats = ConvStats::default();
    for (row, (vals, s)) in rows.iter().enumerate() {
        stats.merge(s);
        let (n, oh) = (row / g.out.h, row % g.out.h);
        for (oc, line) in vals.chunks_exact(width.max(1)).enumerate() {
            let start = g.out.offset(n, oc, oh, 0);
            data[start..start + width].copy_from_slice(line);
        }
    }
    Ok((Tensor4::from_parts(g.out, data)?, stats))
}

/// Reference cross-correlation with bias, zero padding and stride.
///
/// NaN inputs propagate arithmetically (canonicalized on output).
pub fn conv2d(x: &Tensor4, k: &Kernel4, cfg: &ConvConfig) -> Result<Tensor4> {
    let g = Geometry::new(x, k, cfg)?;
    let width = g.out.w;
    let (out, _) = run_rows(&g, 0.0, |n, oh, buf, out| {
        let sample = x.sample(n);
        for ow in 0..width {
            gather(sample, &g, oh, ow, buf);
            accumulate(buf, k, out, ow, width);
        }
        ConvStats::default()
    })?;
    Ok(out)
}

/// NaN convolution; see the module docs for the skip rule.
pub fn nan_conv2d(x: &Tensor4, k: &Kernel4, cfg: &ConvConfig) -> Result<Tensor4> {
    nan_conv2d_with_stats(x, k, cfg).map(|(t, _)| t)
}

/// [`nan_conv2d`] that also reports how many windows were skipped.
pub fn nan_conv2d_with_stats(x: &Tensor4, k: &Kernel4, cfg: &ConvConfig) -> Result<(Tensor4, ConvStats)> {
    let g = Geometry::new(x, k, cfg)?;
    let width = g.out.w;
    let volume = g.volume();
    let dirty = nan_rows(x);
    run_rows(&g, CANONICAL_NAN, |n, oh, buf, out| {
        let sample = x.sample(n);
        let mut stats = ConvStats::default();
        if row_is_clean(&dirty, &g, n, oh) {
            for ow in 0..width {
                gather(sample, &g, oh, ow, buf);
                accumulate(buf, k, out, ow, width);
            }
            stats.total = width as u64;
            stats.histogram[0] = width as u64;
            return stats;
        }
        let mut rng: Option<Rng> = None;
        for ow in 0..width {
            let nans = window_nans(sample, &g, oh, ow);
            let skip = is_skipped(nans, volume, cfg.t2);
            stats.record(ratio_of(nans, volume), skip);
            if skip {
                continue;
            }
            gather(sample, &g, oh, ow, buf);
            if nans > 0 {
                let ok = match cfg.substitution {
                    Substitution::Mean => fill_mean(buf),
                    Substitution::Gaussian => {
                        let rng = rng.get_or_insert_with(|| Rng::stream(cfg.seed, (n * g.out.h + oh) as u64));
                        fill_gaussian(buf, cfg.sigma, rng)
                    }
                };
                // unreachable for t2 <= 1: an all-NaN window has r = 1 >= t2
                if !ok {
                    continue;
                }
            }
            accumulate(buf, k, out, ow, width);
        }
        stats
    })
}

/// Skip decision for a window with `nans` NaNs among `volume` elements.
#[inline]
pub fn is_skipped(nans: usize, volume: usize, t2: f64) -> bool {
    if volume == 1 {
        nans == 1
    } else {
        ratio_of(nans, volume) >= t2
    }
}

/// `(skipped, total)` window counts for `nan_conv2d` without computing it.
pub fn count_skips(x: &Tensor4, k: &Kernel4, cfg: &ConvConfig) -> Result<(u64, u64)> {
    let g = Geometry::new(x, k, cfg)?;
    let volume = g.volume();
    let skipped: u64 = (0..g.rows())
        .into_par_iter()
        .map(|row| {
            let (n, oh) = (row / g.out.h, row % g.out.h);
            let sample = x.sample(n);
            (0..g.out.w)
                .filter(|&ow| is_skipped(window_nans(sample, &g, oh, ow), volume, cfg.t2))
                .count() as u64
        })
        .sum();
    Ok((skipped, (g.rows() * g.out.w) as u64))
}

fn fill_mean(buf: &mut [f32]) -> bool {
    let (sum, count) = buf
        .iter()
        .filter(|v| !v.is_nan())
        .fold((0.0f64, 0usize), |(s, c), &v| (s + f64::from(v), c + 1));
    if count == 0 {
        return false;
    }
    let mean = (sum / count as f64) as f32;
    for v in buf.iter_mut().filter(|v| v.is_nan()) {
        *v = mean;
    }
    true
}

fn fill_gaussian(buf: &mut [f32], sigma: f64, rng: &mut Rng) -> bool {
    let Some(max) = buf.iter().copied().filter(|v| !v.is_nan()).reduce(f32::max) else {
        return false;
    };
    for v in buf.iter_mut() {
        if v.is_nan() {
            *v = rng.normal(f64::from(max), sigma) as f32;
        }
    }
    true
}

/// Window values with every NaN replaced by the mean of the non-NaN ones.
pub fn substitute_mean(window: &Window<'_>) -> Result<Vec<f32>> {
    let mut values = window.values();
    if !fill_mean(&mut values) {
        return Err(Error::Internal("mean substitution on an all-NaN window".into()));
    }
    Ok(values)
}

/// Window values with every NaN replaced by a `Normal(max, sigma^2)` draw,
/// consumed from `rng` in scan order.
pub fn substitute_gaussian(window: &Window<'_>, sigma: f64, rng: &mut Rng) -> Result<Vec<f32>> {
    let mut values = window.values();
    if !fill_gaussian(&mut values, sigma, rng) {
        return Err(Error::Internal("gaussian substitution on an all-NaN window".into()));
    }
    Ok(values)
}

impl Tensor4 {
    /// Channels `start..end` of every batch item.
    pub fn select_channels(&self, start: usize, end: usize) -> Result<Tensor4> {
        let s = self.shape();
        if start > end || end > s.c {
            return Err(Error::shape(format!("channel range {start}..{end} outside {s}")));
        }
        let plane = s.plane_len();
        let mut data = Vec::with_capacity(s.n * (end - start) * plane);
        for n in 0..s.n {
            for c in start..end {
                data.extend_from_slice(self.plane(n, c));
            }
        }
        Tensor4::from_parts((s.n, end - start, s.h, s.w), data)
    }

    /// Concatenates tensors along the channel axis.
    pub fn concat_channels(parts: &[Tensor4]) -> Result<Tensor4> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("nothing to concatenate"))?
            .shape();
        if parts
            .iter()
            .any(|p| p.shape().n != first.n || p.shape().h != first.h || p.shape().w != first.w)
        {
            return Err(Error::shape("concatenated tensors differ in batch or spatial size"));
        }
        let c: usize = parts.iter().map(|p| p.shape().c).sum();
        let mut data = Vec::with_capacity(first.n * c * first.plane_len());
        for n in 0..first.n {
            for p in parts {
                data.extend_from_slice(p.sample(n));
            }
        }
        Tensor4::from_parts((first.n, c, first.h, first.w), data)
    }
}

impl Kernel4 {
    /// Output channels `start..end` with their bias.
    fn select_outputs(&self, start: usize, end: usize) -> Result<Kernel4> {
        let s = self.shape();
        let v = self.volume();
        Kernel4::new(
            (end - start, s.c, s.h, s.w),
            self.data()[start * v..end * v].to_vec(),
            self.bias().map(|b| b[start..end].to_vec()),
        )
    }
}

/// Grouped convolution. The kernel has shape `(C_out, C_in / groups, H_k, W_k)`;
/// group `g` maps input channels `g*C_in/groups..` to output channels
/// `g*C_out/groups..`. `groups == C_in` with one input channel per filter is
/// a depthwise convolution.
pub fn grouped_conv2d(
    x: &Tensor4,
    k: &Kernel4,
    groups: usize,
    cfg: &ConvConfig,
    nan_aware: bool,
) -> Result<(Tensor4, ConvStats)> {
    let s = x.shape();
    if groups == 0 || !s.c.is_multiple_of(groups) || !k.c_out().is_multiple_of(groups) {
        return Err(Error::shape(format!(
            "{groups} groups do not divide {} input and {} output channels",
            s.c,
            k.c_out()
        )));
    }
    let (cin_g, cout_g) = (s.c / groups, k.c_out() / groups);
    if k.c_in() != cin_g {
        return Err(Error::shape(format!(
            "kernel expects {} channels per group, input provides {cin_g}",
            k.c_in()
        )));
    }
    let mut outs = Vec::with_capacity(groups);
    let mut stats = ConvStats::default();
    for g in 0..groups {
        let xg = x.select_channels(g * cin_g, (g + 1) * cin_g)?;
        let kg = k.select_outputs(g * cout_g, (g + 1) * cout_g)?;
        if nan_aware {
            let (y, st) = nan_conv2d_with_stats(&xg, &kg, cfg)?;
            stats.merge(&st);
            outs.push(y);
        } else {
            outs.push(conv2d(&xg, &kg, cfg)?);
        }
    }
    Ok((Tensor4::concat_channels(&outs)?, stats))
}
