//! Per-layer skip ratios of a graph over a list of `t2` thresholds.

use serde::Serialize;

use crate::bench::csv_preamble;
use crate::error::{Error, Result};
use crate::network::{forward, LayerGraph, LayerKind, Mode};
use crate::tensor::Tensor4;

pub const DEFAULT_SWEEP: [f64; 4] = [1.0, 0.8, 0.5, 0.4];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub t2: f64,
    pub layer_index: usize,
    pub kind: LayerKind,
    pub name: Option<String>,
    pub total: u64,
    pub skipped: u64,
}

impl SweepRow {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.skipped as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// One row per NaN-aware convolution layer and threshold.
    pub rows: Vec<SweepRow>,
    /// `(t2, aggregate skip ratio)` per threshold.
    pub aggregate: Vec<(f64, f64)>,
}

/// One forward pass per threshold, with `t2` applied to every layer.
pub fn run_threshold_sweep(graph: &LayerGraph, input: &Tensor4, t2s: &[f64], mode: Mode) -> Result<SweepResult> {
    if t2s.is_empty() {
        return Err(Error::Config("t2 list is empty".into()));
    }
    let mut rows = Vec::new();
    let mut aggregate = Vec::with_capacity(t2s.len());
    for &t2 in t2s {
        let g = graph.with_t2(t2);
        let (_, report) = forward(&g, input, mode)?;
        rows.extend(report.layers.iter().filter(|l| l.nan_aware).map(|l| SweepRow {
            t2,
            layer_index: l.index,
            kind: l.kind,
            name: l.name.clone(),
            total: l.total,
            skipped: l.skipped,
        }));
        aggregate.push((t2, report.aggregate_skip_ratio()));
    }
    Ok(SweepResult { rows, aggregate })
}

pub const SWEEP_CSV_HEADER: &str = "t2,layer,kind,name,total,skipped,ratio";

/// Per-layer rows followed by one `layer=all` row per threshold.
pub fn sweep_to_csv(result: &SweepResult, seed: u64, threads: usize) -> String {
    let mut out = csv_preamble(seed, threads);
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6}\n",
            r.t2,
            r.layer_index,
            r.kind,
            r.name.as_deref().unwrap_or(""),
            r.total,
            r.skipped,
            r.ratio()
        ));
    }
    for (t2, ratio) in &result.aggregate {
        let (skipped, total) = result
            .rows
            .iter()
            .filter(|r| r.t2 == *t2)
            .fold((0, 0), |(s, t), r| (s + r.skipped, t + r.total));
        out.push_str(&format!("{t2},all,,,{total},{skipped},{ratio:.6}\n"));
    }
    out
}
