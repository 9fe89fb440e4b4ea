//! Plain-text graph description.
//!
//! ```text
//! nanskip-graph v1
//! # comments and blank lines are ignored
//! global t2=0.5 t1=1 eps=1e-7 sigma=0.001 substitution=mean seed=0
//! weight name=enc file=enc.npy bias=enc.bias.npy
//! weight name=dec init=random shape=1,8,3,3 seed=7 bias=zeros
//! conv name=enc weight=enc stride=1 pad=1
//! max_pool name=p1 k=2 stride=2
//! max_unpool pair=p1
//! nan_conv name=dec weight=dec pad=1 t2=0.8
//! ```
//!
//! The first line is the version header. Every other line is a `global`
//! directive, a `weight` declaration, or one layer: its kind followed by
//! `key=value` parameters. Layer kinds are `conv`, `nan_conv`, `relu`,
//! `max_pool`, `multi_pool_conservative`, `aggressive_pool`, `max_unpool`,
//! `conservative_unpool`, `flatten`, `dense`, `nan_to_zero`.
//!
//! Conv keys: `name weight stride pad groups t2 substitution sigma`.
//! Pool keys: `name k stride eps t1`. Unpool keys: `pair`. Dense keys:
//! `name weight`. Weight files are NPY, resolved relative to the graph
//! file; a bias file holds `C_out` values in any rank-4 shape. Random
//! weights are He-uniform from the given seed; `bias=random` draws small
//! uniform biases, the default is no bias.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{load_npy, save_npy};
use crate::network::zoo::random_kernel;
use crate::network::{Globals, Layer, LayerGraph, LayerKind, LayerSpec, Overrides};
use crate::tensor::{Kernel4, Shape4, Tensor4};

pub const HEADER: &str = "nanskip-graph v1";

pub fn load_graph(path: impl AsRef<Path>) -> Result<LayerGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_graph(&text, &base)
}

struct Params<'a> {
    line: usize,
    map: HashMap<&'a str, &'a str>,
}

impl<'a> Params<'a> {
    fn parse(line: usize, tokens: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut map = HashMap::new();
        for tok in tokens {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected key=value, found '{tok}'"),
            })?;
            if map.insert(k, v).is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key '{k}'"),
                });
            }
        }
        Ok(Self { line, map })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn take_str(&mut self, key: &str) -> Option<&'a str> {
        self.map.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<&'a str> {
        self.take_str(key).ok_or_else(|| self.err(format!("missing '{key}'")))
    }

    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(format!("invalid value '{v}' for '{key}'"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(self.err(format!("unknown key '{k}'"))),
        }
    }
}

pub fn parse_graph(text: &str, base_dir: &Path) -> Result<LayerGraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((line, other)) => {
            return Err(Error::Parse {
                line,
                message: format!("expected header '{HEADER}', found '{other}'"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty graph file".into(),
            })
        }
    }

    let mut globals = Globals::default();
    let mut weights = HashMap::new();
    let mut layers = Vec::new();
    for (line, text) in lines {
        let mut tokens = text.split_whitespace();
        let head = tokens.next().expect("non-empty line");
        let mut p = Params::parse(line, tokens)?;
        match head {
            "global" => {
                if let Some(v) = p.take("t2")? {
                    globals.t2 = v;
                }
                if let Some(v) = p.take("t1")? {
                    globals.t1 = v;
                }
                if let Some(v) = p.take("eps")? {
                    globals.eps = v;
                }
                if let Some(v) = p.take("sigma")? {
                    globals.sigma = v;
                }
                if let Some(v) = p.take("substitution")? {
                    globals.substitution = v;
                }
                if let Some(v) = p.take("seed")? {
                    globals.seed = v;
                }
                p.finish()?;
            }
            "weight" => {
                let name = p.require("name")?.to_string();
                let kernel = parse_weight(&mut p, base_dir)?;
                p.finish()?;
                weights.insert(name, kernel);
            }
            kind => {
                let kind: LayerKind = kind.parse().map_err(|e: Error| p.err(e.to_string()))?;
                layers.push(parse_layer(kind, &mut p)?);
                p.finish()?;
            }
        }
    }
    LayerGraph::new(layers, weights, globals)
}

fn parse_weight(p: &mut Params<'_>, base: &Path) -> Result<Kernel4> {
    if let Some(file) = p.take_str("file") {
        let tensor = load_npy(base.join(file))?;
        let bias = match p.take_str("bias") {
            Some(b) => Some(load_npy(base.join(b))?.into_data()),
            None => None,
        };
        return Kernel4::from_tensor(tensor, bias).map_err(|e| p.err(e.to_string()));
    }
    match p.take_str("init") {
        Some("random") => {
            let dims: Vec<usize> = p
                .require("shape")?
                .split(',')
                .map(|d| d.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| p.err("shape must be four comma-separated integers"))?;
            let [c_out, c_in, kh, kw] = dims[..] else {
                return Err(p.err("shape must have four dimensions"));
            };
            let seed = p.take("seed")?.unwrap_or(0);
            let bias = match p.take_str("bias") {
                None | Some("none") | Some("zeros") => false,
                Some("random") => true,
                Some(other) => return Err(p.err(format!("unknown bias init '{other}'"))),
            };
            Ok(random_kernel(Shape4::new(c_out, c_in, kh, kw), seed, bias))
        }
        Some(other) => Err(p.err(format!("unknown init '{other}'"))),
        None => Err(p.err("weight needs file= or init=random")),
    }
}

fn parse_layer(kind: LayerKind, p: &mut Params<'_>) -> Result<LayerSpec> {
    let name = p.take_str("name").map(str::to_string);
    let mut overrides = Overrides::default();
    let layer = match kind {
        LayerKind::Conv | LayerKind::NanConv => {
            overrides.t2 = p.take("t2")?;
            overrides.substitution = p.take("substitution")?;
            overrides.sigma = p.take("sigma")?;
            Layer::Conv {
                weight: p.require("weight")?.to_string(),
                stride: p.take("stride")?.unwrap_or(1),
                padding: p.take("pad")?.unwrap_or(0),
                groups: p.take("groups")?.unwrap_or(1),
            }
        }
        LayerKind::MaxPool | LayerKind::MultiPoolConservative | LayerKind::AggressivePool => {
            overrides.eps = p.take("eps")?;
            overrides.t1 = p.take("t1")?;
            let kernel = p.take("k")?.unwrap_or(2);
            Layer::Pool {
                kernel,
                stride: p.take("stride")?.unwrap_or(kernel),
            }
        }
        LayerKind::MaxUnpool | LayerKind::ConservativeUnpool => Layer::Unpool {
            pair: p.require("pair")?.to_string(),
        },
        LayerKind::Dense => Layer::Dense {
            weight: p.require("weight")?.to_string(),
        },
        LayerKind::Relu => Layer::Relu,
        LayerKind::Flatten => Layer::Flatten,
        LayerKind::NanToZero => Layer::NanToZero,
    };
    Ok(LayerSpec {
        kind,
        name,
        layer,
        overrides,
    })
}

/// Writes `graph` as `<dir>/<stem>.txt` plus one NPY per weight (and bias).
/// Returns the path of the graph file.
pub fn save_graph(graph: &LayerGraph, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let g = graph.globals();
    let mut text = format!("{HEADER}\n");
    let _ = writeln!(
        text,
        "global t2={} t1={} eps={:e} sigma={:e} substitution={} seed={}",
        g.t2, g.t1, g.eps, g.sigma, g.substitution, g.seed
    );

    let mut names: Vec<&String> = graph.weights().keys().collect();
    names.sort();
    for name in names {
        let k = &graph.weights()[name];
        let file = format!("{stem}.{name}.npy");
        save_npy(&Tensor4::from_parts(k.shape(), k.data().to_vec())?, dir.join(&file))?;
        let _ = write!(text, "weight name={name} file={file}");
        if let Some(b) = k.bias() {
            let bias_file = format!("{stem}.{name}.bias.npy");
            save_npy(
                &Tensor4::from_parts((1, 1, 1, b.len()), b.to_vec())?,
                dir.join(&bias_file),
            )?;
            let _ = write!(text, " bias={bias_file}");
        }
        text.push('\n');
    }

    for spec in graph.layers() {
        text.push_str(spec.kind.as_str());
        if let Some(n) = &spec.name {
            let _ = write!(text, " name={n}");
        }
        match &spec.layer {
            Layer::Conv {
                weight,
                stride,
                padding,
                groups,
            } => {
                let _ = write!(text, " weight={weight} stride={stride} pad={padding} groups={groups}");
            }
            Layer::Pool { kernel, stride } => {
                let _ = write!(text, " k={kernel} stride={stride}");
            }
            Layer::Unpool { pair } => {
                let _ = write!(text, " pair={pair}");
            }
            Layer::Dense { weight } => {
                let _ = write!(text, " weight={weight}");
            }
            Layer::Relu | Layer::Flatten | Layer::NanToZero => {}
        }
        let o = &spec.overrides;
        if let Some(v) = o.t2 {
            let _ = write!(text, " t2={v}");
        }
        if let Some(v) = o.substitution {
            let _ = write!(text, " substitution={v}");
        }
        if let Some(v) = o.sigma {
            let _ = write!(text, " sigma={v:e}");
        }
        if let Some(v) = o.eps {
            let _ = write!(text, " eps={v:e}");
        }
        if let Some(v) = o.t1 {
            let _ = write!(text, " t1={v}");
        }
        text.push('\n');
    }

    let path = dir.join(format!("{stem}.txt"));
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
