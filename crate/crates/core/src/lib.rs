//! NaN-aware pooling, unpooling and convolution kernels.
//!
//! Max pooling over near-uniform regions picks an arbitrary index among
//! tied maxima, and max unpooling then scatters noise driven by that choice.
//! This crate marks such ambiguous positions with NaN instead, and provides
//! a convolution that skips windows dominated by NaN:
//!
//! * [`pooling`]: standard max pool/unpool, multi-index pooling with
//!   conservative NaN unpooling, and aggressive NaN pooling.
//! * [`convolution`]: reference cross-correlation and the NaN-skipping
//!   variant with mean or Gaussian substitution.
//! * [`uncertainty`]: Monte Carlo perturbation and significant-bit maps that
//!   expose the unpooling instability.
//! * [`network`]: a small sequential graph runner with per-layer skip
//!   instrumentation.
//! * [`bench`]: speedup trials, threshold sweeps, Dice and PSNR.
//!
//! Tensors are row-major NCHW `f32` ([`Tensor4`]).

pub mod bench;
pub mod cli;
pub mod convolution;
pub mod error;
pub mod io;
pub mod network;
pub mod pooling;
pub mod rng;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{nan_ratio, Kernel4, Shape4, Tensor4, Window, CANONICAL_NAN};
