use serde::{Deserialize, Serialize};

use crate::convolution::HISTOGRAM_BINS;
use crate::network::{LayerKind, Mode};
use crate::tensor::Shape4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub kind: LayerKind,
    pub name: Option<String>,
    /// True when the layer ran the NaN-skipping convolution.
    pub nan_aware: bool,
    pub output_shape: Shape4,
    /// Convolution windows evaluated (zero for non-convolution layers).
    pub total: u64,
    pub skipped: u64,
    pub histogram: [u64; HISTOGRAM_BINS],
    pub ns: u64,
}

impl LayerReport {
    pub fn skip_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.skipped as f64 / self.total as f64
        }
    }
}

/// Per-layer window and timing counters for one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentationReport {
    pub mode: Mode,
    pub layers: Vec<LayerReport>,
    pub total_ns: u64,
}

impl InstrumentationReport {
    /// `(skipped, total)` summed over NaN-aware convolution layers.
    pub fn nan_conv_totals(&self) -> (u64, u64) {
        self.layers
            .iter()
            .filter(|l| l.nan_aware)
            .fold((0, 0), |(s, t), l| (s + l.skipped, t + l.total))
    }

    /// Skipped over total windows across NaN-aware convolution layers.
    pub fn aggregate_skip_ratio(&self) -> f64 {
        let (skipped, total) = self.nan_conv_totals();
        if total == 0 {
            0.0
        } else {
            skipped as f64 / total as f64
        }
    }

    pub const CSV_HEADER: &'static str = "layer_index,kind,total,skipped,ratio,ns";

    /// CSV rows under [`Self::CSV_HEADER`], no comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for l in &self.layers {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{}\n",
                l.index,
                l.kind,
                l.total,
                l.skipped,
                l.skip_ratio(),
                l.ns
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
