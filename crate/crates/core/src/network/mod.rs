//! Sequential layer graphs with per-layer skip instrumentation.
//!
//! A [`LayerGraph`] is an ordered list of layers plus named weights. Generic
//! layers (`conv`, `max_pool`, `max_unpool`) take their operator from the run
//! [`Mode`]; the explicit variants (`nan_conv`, `multi_pool_conservative`,
//! `aggressive_pool`, `conservative_unpool`) always use theirs. Unpool layers
//! name the pool whose indices they consume.

mod format;
mod forward;
mod graph;
mod report;
pub mod zoo;

pub use format::{load_graph, parse_graph, save_graph, HEADER};
pub use forward::{argmax, dense, forward, forward_observed, forward_with, nan_to_zero, ForwardOptions, ForwardOutput};
pub use graph::{Globals, GraphBuilder, Layer, LayerGraph, LayerKind, LayerSpec, Mode, Overrides};
pub use report::{InstrumentationReport, LayerReport};
