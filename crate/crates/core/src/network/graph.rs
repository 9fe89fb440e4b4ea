use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::convolution::{ConvConfig, Substitution, DEFAULT_SIGMA, DEFAULT_T2};
use crate::error::{Error, Result};
use crate::pooling::{PoolConfig, DEFAULT_EPS};
use crate::tensor::{Kernel4, Shape4};

/// Which operator family the runner substitutes for generic layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `max_pool`, `max_unpool`, `conv2d`.
    #[default]
    Standard,
    /// `multi_max_pool`, `conservative_unpool`, `nan_conv2d`.
    Conservative,
    /// `aggressive_max_pool`, `max_unpool`, `nan_conv2d`.
    Aggressive,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::Conservative => "conservative",
            Mode::Aggressive => "aggressive",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" | "default" => Ok(Mode::Standard),
            "conservative" => Ok(Mode::Conservative),
            "aggressive" => Ok(Mode::Aggressive),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    NanConv,
    Relu,
    MaxPool,
    MultiPoolConservative,
    AggressivePool,
    MaxUnpool,
    ConservativeUnpool,
    Flatten,
    Dense,
    NanToZero,
}

impl LayerKind {
    pub const ALL: [LayerKind; 11] = [
        LayerKind::Conv,
        LayerKind::NanConv,
        LayerKind::Relu,
        LayerKind::MaxPool,
        LayerKind::MultiPoolConservative,
        LayerKind::AggressivePool,
        LayerKind::MaxUnpool,
        LayerKind::ConservativeUnpool,
        LayerKind::Flatten,
        LayerKind::Dense,
        LayerKind::NanToZero,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::NanConv => "nan_conv",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "max_pool",
            LayerKind::MultiPoolConservative => "multi_pool_conservative",
            LayerKind::AggressivePool => "aggressive_pool",
            LayerKind::MaxUnpool => "max_unpool",
            LayerKind::ConservativeUnpool => "conservative_unpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense => "dense",
            LayerKind::NanToZero => "nan_to_zero",
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::NanConv)
    }

    pub fn is_pool(&self) -> bool {
        matches!(
            self,
            LayerKind::MaxPool | LayerKind::MultiPoolConservative | LayerKind::AggressivePool
        )
    }

    pub fn is_unpool(&self) -> bool {
        matches!(self, LayerKind::MaxUnpool | LayerKind::ConservativeUnpool)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown layer kind '{s}'")))
    }
}

/// Per-layer overrides of the graph-wide NaN parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    pub t2: Option<f64>,
    pub substitution: Option<Substitution>,
    pub sigma: Option<f64>,
    pub eps: Option<f32>,
    pub t1: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        weight: String,
        stride: usize,
        padding: usize,
        groups: usize,
    },
    Relu,
    Pool {
        kernel: usize,
        stride: usize,
    },
    Unpool {
        pair: String,
    },
    Flatten,
    Dense {
        weight: String,
    },
    NanToZero,
}

/// One entry of a [`LayerGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub name: Option<String>,
    pub layer: Layer,
    pub overrides: Overrides,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, layer: Layer) -> Self {
        Self {
            kind,
            name: None,
            layer,
            overrides: Overrides::default(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_overrides(mut self, overrides: Overrides) -> Self {
        self.overrides = overrides;
        self
    }
}

/// Graph-wide NaN parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Globals {
    pub t2: f64,
    pub t1: usize,
    pub eps: f32,
    pub sigma: f64,
    pub substitution: Substitution,
    /// Base seed for Gaussian substitution; each layer derives its own.
    pub seed: u64,
}

impl Default for Globals {
    fn default() -> Self {
        Self {
            t2: DEFAULT_T2,
            t1: 1,
            eps: DEFAULT_EPS,
            sigma: DEFAULT_SIGMA,
            substitution: Substitution::Mean,
            seed: 0,
        }
    }
}

/// A validated sequential network: layers, named weights and NaN parameters.
#[derive(Debug, Clone)]
pub struct LayerGraph {
    layers: Vec<LayerSpec>,
    weights: HashMap<String, Kernel4>,
    globals: Globals,
}

impl LayerGraph {
    pub fn new(layers: Vec<LayerSpec>, weights: HashMap<String, Kernel4>, globals: Globals) -> Result<Self> {
        let graph = Self {
            layers,
            weights,
            globals,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &HashMap<String, Kernel4> {
        &self.weights
    }

    pub fn weight(&self, name: &str) -> Option<&Kernel4> {
        self.weights.get(name)
    }

    pub fn globals(&self) -> &Globals {
        &self.globals
    }

    pub fn globals_mut(&mut self) -> &mut Globals {
        &mut self.globals
    }

    /// Copy with `t2` applied to every layer, dropping per-layer `t2` overrides.
    pub fn with_t2(&self, t2: f64) -> Self {
        let mut g = self.clone();
        g.globals.t2 = t2;
        for l in &mut g.layers {
            l.overrides.t2 = None;
        }
        g
    }

    pub(crate) fn conv_config(&self, index: usize) -> Option<ConvConfig> {
        let spec = &self.layers[index];
        let Layer::Conv { stride, padding, .. } = spec.layer else {
            return None;
        };
        let o = &spec.overrides;
        Some(ConvConfig {
            stride,
            padding,
            t2: o.t2.unwrap_or(self.globals.t2),
            substitution: o.substitution.unwrap_or(self.globals.substitution),
            sigma: o.sigma.unwrap_or(self.globals.sigma),
            seed: self
                .globals
                .seed
                .wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        })
    }

    pub(crate) fn pool_config(&self, index: usize) -> Option<PoolConfig> {
        let spec = &self.layers[index];
        let Layer::Pool { kernel, stride } = spec.layer else {
            return None;
        };
        Some(PoolConfig {
            kernel,
            stride,
            eps: spec.overrides.eps.unwrap_or(self.globals.eps),
            t1: spec.overrides.t1.unwrap_or(self.globals.t1),
        })
    }

    /// Index of the pool layer named `name` that precedes layer `before`.
    pub(crate) fn pool_index(&self, name: &str, before: usize) -> Option<usize> {
        self.layers[..before]
            .iter()
            .rposition(|l| l.kind.is_pool() && l.name.as_deref() == Some(name))
    }

    /// Structural checks that need no input shape: kinds match layer data,
    /// weights exist, unpools pair with an earlier pool, channel counts chain.
    fn validate(&self) -> Result<()> {
        let mut channels: Option<usize> = None;
        let mut pool_channels: HashMap<&str, Option<usize>> = HashMap::new();
        for (i, spec) in self.layers.iter().enumerate() {
            let consistent = match (&spec.layer, spec.kind) {
                (Layer::Conv { .. }, k) => k.is_conv(),
                (Layer::Pool { .. }, k) => k.is_pool(),
                (Layer::Unpool { .. }, k) => k.is_unpool(),
                (Layer::Relu, LayerKind::Relu)
                | (Layer::Flatten, LayerKind::Flatten)
                | (Layer::Dense { .. }, LayerKind::Dense)
                | (Layer::NanToZero, LayerKind::NanToZero) => true,
                _ => false,
            };
            if !consistent {
                return Err(Error::graph(i, format!("layer data does not match kind {}", spec.kind)));
            }
            match &spec.layer {
                Layer::Conv {
                    weight, groups, stride, ..
                } => {
                    let k = self
                        .weights
                        .get(weight)
                        .ok_or_else(|| Error::graph(i, format!("missing weight '{weight}'")))?;
                    if *groups == 0 || *stride == 0 {
                        return Err(Error::graph(i, "groups and stride must be >= 1"));
                    }
                    if k.c_out() % groups != 0 {
                        return Err(Error::graph(
                            i,
                            format!("{groups} groups do not divide {} outputs", k.c_out()),
                        ));
                    }
                    if let Some(c) = channels {
                        if c != k.c_in() * groups {
                            return Err(Error::graph(
                                i,
                                format!("expects {} input channels, previous layer gives {c}", k.c_in() * groups),
                            ));
                        }
                    }
                    self.conv_config(i)
                        .expect("conv layer")
                        .validate()
                        .map_err(|e| Error::graph(i, e.to_string()))?;
                    channels = Some(k.c_out());
                }
                Layer::Pool { .. } => {
                    self.pool_config(i)
                        .expect("pool layer")
                        .validate()
                        .map_err(|e| Error::graph(i, e.to_string()))?;
                    let name = spec
                        .name
                        .as_deref()
                        .ok_or_else(|| Error::graph(i, "pool layers need a name for unpool pairing"))?;
                    pool_channels.insert(name, channels);
                }
                Layer::Unpool { pair } => {
                    let Some(&pc) = pool_channels.get(pair.as_str()) else {
                        return Err(Error::graph(
                            i,
                            format!("unpool references no earlier pool named '{pair}'"),
                        ));
                    };
                    if let (Some(a), Some(b)) = (pc, channels) {
                        if a != b {
                            return Err(Error::graph(
                                i,
                                format!("unpool gets {b} channels, pool '{pair}' had {a}"),
                            ));
                        }
                    }
                }
                Layer::Dense { weight } => {
                    let k = self
                        .weights
                        .get(weight)
                        .ok_or_else(|| Error::graph(i, format!("missing weight '{weight}'")))?;
                    if k.kh() != 1 || k.kw() != 1 {
                        return Err(Error::graph(i, "dense weights must have shape (out, in, 1, 1)"));
                    }
                    channels = Some(k.c_out());
                }
                Layer::Flatten => channels = None,
                Layer::Relu | Layer::NanToZero => {}
            }
        }
        Ok(())
    }

    /// Output shape of every layer for an input of shape `input`.
    pub fn infer_shapes(&self, input: Shape4) -> Result<Vec<Shape4>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut pools: HashMap<usize, (Shape4, Shape4)> = HashMap::new();
        let mut cur = input;
        for (i, spec) in self.layers.iter().enumerate() {
            cur = match &spec.layer {
                Layer::Conv { weight, groups, .. } => {
                    let k = &self.weights[weight];
                    if cur.c != k.c_in() * groups {
                        return Err(Error::graph(
                            i,
                            format!("expects {} input channels, got shape {cur}", k.c_in() * groups),
                        ));
                    }
                    let per_group = Shape4::new(cur.n, k.c_in(), cur.h, cur.w);
                    self.conv_config(i)
                        .expect("conv layer")
                        .output_shape(per_group, k.shape())
                        .map_err(|e| Error::graph(i, e.to_string()))?
                }
                Layer::Pool { .. } => {
                    let out = self
                        .pool_config(i)
                        .expect("pool layer")
                        .output_shape(cur)
                        .map_err(|e| Error::graph(i, e.to_string()))?;
                    pools.insert(i, (cur, out));
                    out
                }
                Layer::Unpool { pair } => {
                    let p = self
                        .pool_index(pair, i)
                        .ok_or_else(|| Error::graph(i, format!("unpaired unpool '{pair}'")))?;
                    let (pool_in, pool_out) = pools[&p];
                    if cur != pool_out {
                        return Err(Error::graph(
                            i,
                            format!("unpool input {cur} does not match pool '{pair}' output {pool_out}"),
                        ));
                    }
                    pool_in
                }
                Layer::Flatten => Shape4::new(cur.n, cur.c * cur.h * cur.w, 1, 1),
                Layer::Dense { weight } => {
                    let k = &self.weights[weight];
                    if cur.h != 1 || cur.w != 1 || cur.c != k.c_in() {
                        return Err(Error::graph(
                            i,
                            format!("dense expects ({}, {}, 1, 1) input, got {cur}", cur.n, k.c_in()),
                        ));
                    }
                    Shape4::new(cur.n, k.c_out(), 1, 1)
                }
                Layer::Relu | Layer::NanToZero => cur,
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }
}

/// Fluent construction of a [`LayerGraph`] in code.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    layers: Vec<LayerSpec>,
    weights: HashMap<String, Kernel4>,
    globals: Globals,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn globals(mut self, globals: Globals) -> Self {
        self.globals = globals;
        self
    }

    pub fn weight(mut self, name: impl Into<String>, kernel: Kernel4) -> Self {
        self.weights.insert(name.into(), kernel);
        self
    }

    pub fn layer(mut self, spec: LayerSpec) -> Self {
        self.layers.push(spec);
        self
    }

    fn conv_layer(self, kind: LayerKind, name: &str, kernel: Kernel4, stride: usize, padding: usize) -> Self {
        let spec = LayerSpec::new(
            kind,
            Layer::Conv {
                weight: name.to_string(),
                stride,
                padding,
                groups: 1,
            },
        )
        .named(name);
        self.weight(name, kernel).layer(spec)
    }

    /// Convolution whose operator follows the run mode.
    pub fn conv(self, name: &str, kernel: Kernel4, stride: usize, padding: usize) -> Self {
        self.conv_layer(LayerKind::Conv, name, kernel, stride, padding)
    }

    /// Convolution that is always NaN-aware.
    pub fn nan_conv(self, name: &str, kernel: Kernel4, stride: usize, padding: usize) -> Self {
        self.conv_layer(LayerKind::NanConv, name, kernel, stride, padding)
    }

    pub fn relu(self) -> Self {
        self.layer(LayerSpec::new(LayerKind::Relu, Layer::Relu))
    }

    pub fn pool(self, kind: LayerKind, name: &str, kernel: usize, stride: usize) -> Self {
        self.layer(LayerSpec::new(kind, Layer::Pool { kernel, stride }).named(name))
    }

    pub fn max_pool(self, name: &str, kernel: usize, stride: usize) -> Self {
        self.pool(LayerKind::MaxPool, name, kernel, stride)
    }

    pub fn unpool(self, kind: LayerKind, pair: &str) -> Self {
        self.layer(LayerSpec::new(kind, Layer::Unpool { pair: pair.to_string() }))
    }

    pub fn max_unpool(self, pair: &str) -> Self {
        self.unpool(LayerKind::MaxUnpool, pair)
    }

    pub fn flatten(self) -> Self {
        self.layer(LayerSpec::new(LayerKind::Flatten, Layer::Flatten))
    }

    pub fn dense(self, name: &str, weights: Kernel4) -> Self {
        let spec = LayerSpec::new(
            LayerKind::Dense,
            Layer::Dense {
                weight: name.to_string(),
            },
        )
        .named(name);
        self.weight(name, weights).layer(spec)
    }

    pub fn nan_to_zero(self) -> Self {
        self.layer(LayerSpec::new(LayerKind::NanToZero, Layer::NanToZero))
    }

    pub fn build(self) -> Result<LayerGraph> {
        LayerGraph::new(self.layers, self.weights, self.globals)
    }
}
