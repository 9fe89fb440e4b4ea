use std::collections::HashMap;
use std::time::Instant;

use crate::convolution::{self, ConvStats};
use crate::error::{Error, Result};
use crate::network::report::{InstrumentationReport, LayerReport};
use crate::network::{Layer, LayerGraph, LayerKind, Mode};
use crate::pooling::{self, PoolIndices, PoolOutput};
use crate::tensor::{canonicalize, Kernel4, Tensor4, CANONICAL_NAN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForwardOptions {
    pub mode: Mode,
    /// Keep every layer's output in [`ForwardOutput::intermediates`].
    pub record_intermediates: bool,
}

impl ForwardOptions {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            record_intermediates: false,
        }
    }

    pub fn recording(mut self) -> Self {
        self.record_intermediates = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub output: Tensor4,
    pub report: InstrumentationReport,
    /// Output of layer `i` at position `i`; empty unless recording.
    pub intermediates: Vec<Tensor4>,
}

/// Runs `graph` on `input` with the operators selected by `mode`.
pub fn forward(graph: &LayerGraph, input: &Tensor4, mode: Mode) -> Result<(Tensor4, InstrumentationReport)> {
    let out = forward_with(graph, input, &ForwardOptions::new(mode))?;
    Ok((out.output, out.report))
}

pub fn forward_with(graph: &LayerGraph, input: &Tensor4, opts: &ForwardOptions) -> Result<ForwardOutput> {
    forward_observed(graph, input, opts, |_, t| t)
}

/// Like [`forward_with`], passing every layer's output through `observe`
/// before the next layer consumes it. Timing excludes the observer.
pub fn forward_observed<F>(
    graph: &LayerGraph,
    input: &Tensor4,
    opts: &ForwardOptions,
    mut observe: F,
) -> Result<ForwardOutput>
where
    F: FnMut(usize, Tensor4) -> Tensor4,
{
    let shapes = graph.infer_shapes(input.shape())?;
    if opts.mode == Mode::Standard && input.has_nan() {
        return Err(Error::graph(0, "standard mode requires NaN-free input"));
    }

    let start = Instant::now();
    let mut pools: HashMap<usize, PoolOutput> = HashMap::new();
    let mut layers = Vec::with_capacity(graph.layers().len());
    let mut intermediates = Vec::new();
    let mut cur = input.clone();

    for (i, spec) in graph.layers().iter().enumerate() {
        let t0 = Instant::now();
        let mut stats = ConvStats::default();
        let mut nan_aware = false;
        let next = match &spec.layer {
            Layer::Conv { weight, groups, .. } => {
                let k = &graph.weights()[weight];
                let cfg = graph.conv_config(i).expect("conv layer");
                nan_aware = spec.kind == LayerKind::NanConv || opts.mode != Mode::Standard;
                let (y, st) = if *groups == 1 {
                    if nan_aware {
                        convolution::nan_conv2d_with_stats(&cur, k, &cfg)?
                    } else {
                        let y = convolution::conv2d(&cur, k, &cfg)?;
                        let s = y.shape();
                        let st = ConvStats {
                            total: (s.n * s.h * s.w) as u64,
                            ..ConvStats::default()
                        };
                        (y, st)
                    }
                } else {
                    let (y, mut st) = convolution::grouped_conv2d(&cur, k, *groups, &cfg, nan_aware)?;
                    if !nan_aware {
                        let s = y.shape();
                        st.total = (s.n * s.h * s.w * groups) as u64;
                    }
                    (y, st)
                };
                stats = st;
                y
            }
            Layer::Relu => cur.map(|v| if v.is_nan() { CANONICAL_NAN } else { v.max(0.0) }),
            Layer::Pool { .. } => {
                let cfg = graph.pool_config(i).expect("pool layer");
                let out = match (spec.kind, opts.mode) {
                    (LayerKind::MultiPoolConservative, _) | (LayerKind::MaxPool, Mode::Conservative) => {
                        pooling::multi_max_pool(&cur, &cfg)?
                    }
                    (LayerKind::AggressivePool, _) | (LayerKind::MaxPool, Mode::Aggressive) => {
                        pooling::aggressive_max_pool(&cur, &cfg)?
                    }
                    _ => pooling::max_pool(&cur, &cfg)?,
                };
                let values = out.values.clone();
                pools.insert(i, out);
                values
            }
            Layer::Unpool { pair } => {
                let p = graph
                    .pool_index(pair, i)
                    .ok_or_else(|| Error::graph(i, format!("unpaired unpool '{pair}'")))?;
                let pool = &pools[&p];
                match &pool.indices {
                    PoolIndices::Sets(sets) => pooling::conservative_unpool(&cur, sets, pool.input_shape)?,
                    PoolIndices::Single(idx) if spec.kind == LayerKind::ConservativeUnpool => {
                        let sets = pooling::IndexSets::from_single(idx);
                        pooling::conservative_unpool(&cur, &sets, pool.input_shape)?
                    }
                    PoolIndices::Single(idx) => pooling::max_unpool(&cur, idx, pool.input_shape)?,
                }
            }
            Layer::Flatten => {
                let s = cur.shape();
                cur.clone().reshape((s.n, s.c * s.h * s.w, 1, 1))?
            }
            Layer::Dense { weight } => dense(&cur, &graph.weights()[weight])?,
            Layer::NanToZero => nan_to_zero(&cur),
        };
        let ns = t0.elapsed().as_nanos() as u64;
        debug_assert_eq!(next.shape(), shapes[i]);

        layers.push(LayerReport {
            index: i,
            kind: spec.kind,
            name: spec.name.clone(),
            nan_aware,
            output_shape: next.shape(),
            total: stats.total,
            skipped: stats.skipped,
            histogram: stats.histogram,
            ns,
        });
        cur = observe(i, next);
        if opts.record_intermediates {
            intermediates.push(cur.clone());
        }
    }

    Ok(ForwardOutput {
        output: cur,
        report: InstrumentationReport {
            mode: opts.mode,
            layers,
            total_ns: start.elapsed().as_nanos() as u64,
        },
        intermediates,
    })
}

/// Replaces every NaN with zero.
pub fn nan_to_zero(x: &Tensor4) -> Tensor4 {
    x.map(|v| if v.is_nan() { 0.0 } else { v })
}

/// Fully connected layer on `(N, F, 1, 1)` input with `(out, F, 1, 1)` weights.
pub fn dense(x: &Tensor4, w: &Kernel4) -> Result<Tensor4> {
    let s = x.shape();
    if s.h != 1 || s.w != 1 || s.c != w.c_in() {
        return Err(Error::shape(format!(
            "dense expects ({}, {}, 1, 1) input, got {s}",
            s.n,
            w.c_in()
        )));
    }
    let mut out = Vec::with_capacity(s.n * w.c_out());
    for n in 0..s.n {
        let features = x.sample(n);
        for o in 0..w.c_out() {
            let mut sum = 0.0f32;
            for (a, b) in features.iter().zip(w.filter(o)) {
                sum += a * b;
            }
            if let Some(b) = w.bias() {
                sum += b[o];
            }
            out.push(canonicalize(sum));
        }
    }
    Tensor4::from_parts((s.n, w.c_out(), 1, 1), out)
}

/// Index of the largest value per batch item; NaN never wins.
pub fn argmax(x: &Tensor4) -> Vec<usize> {
    (0..x.shape().n)
        .map(|n| {
            x.sample(n)
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_nan())
                .fold(
                    (0, f32::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect()
}
