//! Command-line front end for the experiments in [`crate::bench`].
//!
//! Every flag may also come from a TOML file given with `--config`. Keys are
//! the flag names without the leading dashes; a `[common]` table applies to
//! every subcommand and a table named after the subcommand overrides it:
//!
//! ```toml
//! [common]
//! seed = 7
//! threads = 1
//!
//! [speedup]
//! sizes = [256, 512]
//! densities = [0.0, 0.5, 0.9]
//! placement = "block"
//! ```
//!
//! Precedence: command line, subcommand table, `[common]`, built-in default.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::bench::synth::{self, BrainLike, Placement};
use crate::bench::{self, csv_preamble, format_metric, with_threads, TrialConfig, DEFAULT_SWEEP};
use crate::convolution::Substitution;
use crate::error::{Error, Result};
use crate::io::{load_npy, save_npy};
use crate::network::{self, forward_with, zoo, ForwardOptions, LayerGraph, Mode};
use crate::rng::Rng;
use crate::tensor::Tensor4;
use crate::uncertainty::{self, McaConfig};

macro_rules! options {
    ($($(#[$meta:meta])* $field:ident: $ty:ty,)*) => {
        /// Flags shared by every subcommand; each reads the ones it needs.
        #[derive(Debug, Clone, Default, Args, Deserialize)]
        #[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
        pub struct Options {
            $($(#[$meta])* #[arg(long)] pub $field: Option<$ty>,)*
        }

        impl Options {
            /// Field-wise `self` if set, else `fallback`.
            pub fn or(self, fallback: Options) -> Options {
                Options { $($field: self.$field.or(fallback.$field),)* }
            }
        }
    };
}

options! {
    /// Square input sides, comma separated
    #[arg(value_delimiter = ',')]
    sizes: Vec<usize>,
    /// NaN densities in [0, 1], comma separated
    #[arg(value_delimiter = ',')]
    densities: Vec<f64>,
    /// NaN placement: random or block
    placement: String,
    /// Block side for block placement
    block: usize,
    /// NaN-ratio skip thresholds, comma separated
    #[arg(value_delimiter = ',')]
    t2: Vec<f64>,
    /// Tie budget of aggressive pooling
    t1: usize,
    /// Near-equality tolerance of multi pooling
    eps: f32,
    /// Standard deviation of Gaussian substitution
    sigma: f64,
    /// NaN substitution: mean or gaussian
    substitution: String,
    /// Operator set: standard, conservative or aggressive
    mode: String,
    seed: u64,
    /// Timed repetitions per cell
    reps: usize,
    /// Untimed runs per cell
    warmup: usize,
    /// Worker threads, 0 for all cores
    threads: usize,
    /// Output channels of the benchmark kernel
    c_out: usize,
    /// CSV destination (stdout if absent)
    out: PathBuf,
    /// Graph description file
    graph: PathBuf,
    /// Input tensor (.npy)
    input: PathBuf,
    /// Second operand for metrics (.npy)
    reference: PathBuf,
    /// Output tensor (.npy) or, for mca, a directory for maps
    output: PathBuf,
    /// JSON report destination
    json: PathBuf,
    /// Save every layer output next to --output
    #[arg(num_args = 0, default_missing_value = "true")]
    record_intermediates: bool,
    /// MCA iterations
    iterations: usize,
    /// MCA virtual precision in bits
    precision: u32,
    /// Print an ASCII heatmap of the last layer to stderr
    #[arg(num_args = 0, default_missing_value = "true")]
    ascii: bool,
    /// Channel width of the built-in U-Net
    features: usize,
    /// Foreground fraction of the brain-like image
    foreground: f64,
    /// Background value of generated images
    background: f32,
    /// Generated input kind: brain, uniform or distinct
    kind: String,
    /// Metric: dice, psnr or both
    metric: String,
    /// PSNR peak value
    peak: f64,
}

#[derive(Debug, Parser)]
#[command(name = "nanskip", version, about = "NaN-aware pooling and convolution experiments")]
pub struct Cli {
    /// TOML file supplying any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time conv2d against nan_conv2d over sizes, densities and thresholds
    Speedup(Options),
    /// Per-layer skip ratios of a graph over t2 thresholds
    Sweep(Options),
    /// Run a graph and report per-layer skips and timing
    Forward(Options),
    /// Significant-bit maps from perturbed repeated runs
    Mca(Options),
    /// Dice and PSNR between two tensors
    Metrics(Options),
    /// Write a synthetic input tensor
    Gen(Options),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Speedup(_) => "speedup",
            Command::Sweep(_) => "sweep",
            Command::Forward(_) => "forward",
            Command::Mca(_) => "mca",
            Command::Metrics(_) => "metrics",
            Command::Gen(_) => "gen",
        }
    }

    fn options(&self) -> &Options {
        match self {
            Command::Speedup(o)
            | Command::Sweep(o)
            | Command::Forward(o)
            | Command::Mca(o)
            | Command::Metrics(o)
            | Command::Gen(o) => o,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub common: Options,
    pub speedup: Options,
    pub sweep: Options,
    pub forward: Options,
    pub mca: Options,
    pub metrics: Options,
    pub gen: Options,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn section(&self, command: &str) -> Options {
        match command {
            "speedup" => self.speedup.clone(),
            "sweep" => self.sweep.clone(),
            "forward" => self.forward.clone(),
            "mca" => self.mca.clone(),
            "metrics" => self.metrics.clone(),
            _ => self.gen.clone(),
        }
    }
}

/// Options for `command` after applying the config file.
pub fn resolve(command: &str, cli: Options, file: Option<&ConfigFile>) -> Options {
    match file {
        Some(f) => cli.or(f.section(command)).or(f.common.clone()),
        None => cli,
    }
}

pub fn main() {
    if let Err(e) = run(std::env::args_os()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        if e.use_stderr() {
            Error::Config(e.to_string())
        } else {
            // --help and --version
            print!("{e}");
            std::process::exit(0);
        }
    })?;
    let file = match &cli.config {
        Some(path) => Some(ConfigFile::parse(&read_text(path)?)?),
        None => None,
    };
    let name = cli.command.name();
    let opts = resolve(name, cli.command.options().clone(), file.as_ref());
    let threads = opts.threads.unwrap_or(0);
    with_threads(threads, || {
        let resolved = rayon::current_num_threads();
        match name {
            "speedup" => speedup(&opts, resolved),
            "sweep" => sweep(&opts, resolved),
            "forward" => forward(&opts, resolved),
            "mca" => mca(&opts, resolved),
            "metrics" => metrics(&opts, resolved),
            _ => gen(&opts),
        }
    })?
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn emit(opts: &Options, csv: &str) -> Result<()> {
    match &opts.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| Error::io(path, e)),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn parse_or<T: std::str::FromStr<Err = Error>>(value: &Option<String>, default: T) -> Result<T> {
    value.as_deref().map_or(Ok(default), str::parse)
}

fn first_size(opts: &Options, default: usize) -> usize {
    opts.sizes.as_ref().and_then(|s| s.first().copied()).unwrap_or(default)
}

/// Graph from `--graph`, else the built-in one, with global NaN parameters applied.
fn graph_from(opts: &Options, default: impl FnOnce() -> LayerGraph) -> Result<LayerGraph> {
    let mut graph = match &opts.graph {
        Some(path) => network::load_graph(path)?,
        None => default(),
    };
    let g = graph.globals_mut();
    if let Some(t2) = opts.t2.as_ref().and_then(|t| t.first()) {
        g.t2 = *t2;
    }
    g.t1 = opts.t1.unwrap_or(g.t1);
    g.eps = opts.eps.unwrap_or(g.eps);
    g.sigma = opts.sigma.unwrap_or(g.sigma);
    g.substitution = parse_or::<Substitution>(&opts.substitution, g.substitution)?;
    g.seed = opts.seed.unwrap_or(g.seed);
    Ok(graph)
}

/// Tensor from `--input`, else a brain-like image.
fn input_from(opts: &Options, side: usize, background: f32) -> Result<Tensor4> {
    match &opts.input {
        Some(path) => load_npy(path),
        None => synth::brain_like(&BrainLike {
            side: first_size(opts, side),
            foreground: opts.foreground.unwrap_or(0.4),
            background: opts.background.unwrap_or(background),
            seed: opts.seed.unwrap_or(0),
        }),
    }
}

fn speedup(opts: &Options, threads: usize) -> Result<()> {
    let d = TrialConfig::default();
    let cfg = TrialConfig {
        sizes: opts.sizes.clone().unwrap_or(d.sizes),
        densities: opts.densities.clone().unwrap_or(d.densities),
        placement: parse_or::<Placement>(&opts.placement, d.placement)?,
        block: opts.block.unwrap_or(d.block),
        t2s: opts.t2.clone().unwrap_or(d.t2s),
        reps: opts.reps.unwrap_or(d.reps),
        warmup: opts.warmup.unwrap_or(d.warmup),
        seed: opts.seed.unwrap_or(d.seed),
        c_out: opts.c_out.unwrap_or(d.c_out),
        threads,
    };
    let results = bench::run_speedup_trials(&cfg)?;
    emit(opts, &bench::trials_to_csv(&results, cfg.seed, threads))
}

fn sweep(opts: &Options, threads: usize) -> Result<()> {
    let seed = opts.seed.unwrap_or(0);
    let graph = graph_from(opts, || zoo::toy_unet(1, opts.features.unwrap_or(8), seed))?;
    let input = input_from(opts, 64, 0.0)?;
    let t2s = opts.t2.clone().unwrap_or(DEFAULT_SWEEP.to_vec());
    let mode = parse_or(&opts.mode, Mode::Conservative)?;
    let result = bench::run_threshold_sweep(&graph, &input, &t2s, mode)?;
    emit(opts, &bench::sweep_to_csv(&result, seed, threads))
}

fn forward(opts: &Options, threads: usize) -> Result<()> {
    let seed = opts.seed.unwrap_or(0);
    let graph = graph_from(opts, || zoo::toy_unet(1, opts.features.unwrap_or(8), seed))?;
    let input = input_from(opts, 64, 0.0)?;
    let mut fo = ForwardOptions::new(parse_or(&opts.mode, Mode::Standard)?);
    let record = opts.record_intermediates.unwrap_or(false);
    if record {
        if opts.output.is_none() {
            return Err(Error::Config("--record-intermediates needs --output".into()));
        }
        fo = fo.recording();
    }
    let out = forward_with(&graph, &input, &fo)?;
    if let Some(path) = &opts.output {
        save_npy(&out.output, path)?;
        for (i, t) in out.intermediates.iter().enumerate() {
            save_npy(t, sibling(path, &format!("layer{i:02}.npy")))?;
        }
    }
    if let Some(path) = &opts.json {
        std::fs::write(path, out.report.to_json()).map_err(|e| Error::io(path, e))?;
    }
    let mut csv = csv_preamble(seed, threads);
    csv.push_str(&out.report.to_csv());
    emit(opts, &csv)
}

/// `dir/stem.suffix` for `path = dir/stem.ext`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn mca(opts: &Options, threads: usize) -> Result<()> {
    let seed = opts.seed.unwrap_or(0);
    let graph = graph_from(opts, zoo::pool_unpool)?;
    let input = input_from(opts, 32, 0.25)?;
    let cfg = McaConfig {
        iterations: opts.iterations.unwrap_or(10),
        precision: opts.precision.unwrap_or(24),
        seed,
    };
    let mode = parse_or(&opts.mode, Mode::Standard)?;
    let report = uncertainty::mca_run(&graph, &input, mode, &cfg)?;

    let mut csv = csv_preamble(seed, threads);
    csv.push_str("layer,kind,mean_bits,min_bits,max_bits\n");
    let row = |csv: &mut String, layer: &str, kind: &str, map: &uncertainty::SigDigitMap| {
        let bits = map.bits().data();
        let min = bits.iter().copied().fold(f32::INFINITY, f32::min);
        let max = bits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let _ = writeln!(csv, "{layer},{kind},{:.4},{min:.4},{max:.4}", map.mean());
    };
    row(&mut csv, "input", "input", &report.input);
    for (i, (spec, map)) in graph.layers().iter().zip(&report.layers).enumerate() {
        row(&mut csv, &i.to_string(), spec.kind.as_str(), map);
    }

    if let Some(dir) = &opts.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, map) in report.layers.iter().enumerate() {
            save_npy(map.bits(), dir.join(format!("layer{i:02}.bits.npy")))?;
            let pgm = dir.join(format!("layer{i:02}.pgm"));
            std::fs::write(&pgm, map.to_pgm(0, 0)).map_err(|e| Error::io(&pgm, e))?;
        }
    }
    if opts.ascii.unwrap_or(false) {
        if let Some(last) = report.layers.last() {
            eprint!("{}", last.to_ascii(0, 0));
        }
    }
    emit(opts, &csv)
}

fn metrics(opts: &Options, threads: usize) -> Result<()> {
    let (Some(a), Some(b)) = (&opts.input, &opts.reference) else {
        return Err(Error::Config("metrics needs --input and --reference".into()));
    };
    let (a, b) = (load_npy(a)?, load_npy(b)?);
    let which = opts.metric.as_deref().unwrap_or("psnr");
    let mut csv = csv_preamble(opts.seed.unwrap_or(0), threads);
    csv.push_str("metric,value\n");
    if matches!(which, "dice" | "both") {
        let _ = writeln!(csv, "dice,{}", format_metric(bench::dice(&a, &b)?));
    }
    if matches!(which, "psnr" | "both") {
        let peak = opts.peak.unwrap_or(1.0);
        let _ = writeln!(csv, "psnr,{}", format_metric(bench::psnr(&a, &b, peak)?));
    }
    if !matches!(which, "dice" | "psnr" | "both") {
        return Err(Error::Config(format!("unknown metric '{which}' (dice|psnr|both)")));
    }
    emit(opts, &csv)
}

fn gen(opts: &Options) -> Result<()> {
    let path = opts
        .output
        .as_ref()
        .ok_or_else(|| Error::Config("gen needs --output".into()))?;
    let seed = opts.seed.unwrap_or(0);
    let side = first_size(opts, 64);
    let mut rng = Rng::stream(seed, 1);
    let clean = match opts.kind.as_deref().unwrap_or("brain") {
        "brain" => synth::brain_like(&BrainLike {
            side,
            foreground: opts.foreground.unwrap_or(0.4),
            background: opts.background.unwrap_or(0.0),
            seed,
        })?,
        "uniform" => synth::uniform((1, 1, side, side), &mut rng),
        "distinct" => synth::distinct((1, 1, side, side), 1.0, 1.0 / 64.0, &mut rng),
        other => {
            return Err(Error::Config(format!(
                "unknown kind '{other}' (brain|uniform|distinct)"
            )))
        }
    };
    let density = opts.densities.as_ref().and_then(|d| d.first().copied()).unwrap_or(0.0);
    let placement = parse_or::<Placement>(&opts.placement, Placement::Block)?;
    let block = opts.block.unwrap_or(synth::DEFAULT_BLOCK);
    let x = synth::place_nans(&clean, density, placement, block, &mut rng)?;
    save_npy(&x, path)?;
    eprintln!("wrote {} ({} NaN of {})", path.display(), x.nan_count(), x.len());
    Ok(())
}
