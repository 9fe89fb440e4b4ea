//! Max pooling and unpooling, plus the NaN-marking variants.
//!
//! Three pooling flavours share one window scan:
//!
//! * [`max_pool`] keeps the first maximum in row-major order.
//! * [`multi_max_pool`] keeps every index within `eps` of the maximum, so
//!   [`conservative_unpool`] can mark ambiguous maxima with NaN.
//! * [`aggressive_max_pool`] emits NaN directly when more than `t1`
//!   values tie within `eps`.
//!
//! NaN inputs never win a window. A window with no finite-or-infinite
//! element pools to `(NaN, top-left)` under every flavour.
//!
//! Indices are flat offsets `h * W + w` into the input plane of the same
//! `(n, c)`, matching the usual max-unpool convention.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4, CANONICAL_NAN};

pub const DEFAULT_EPS: f32 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolConfig {
    pub kernel: usize,
    pub stride: usize,
    pub eps: f32,
    /// Largest number of near-equal maxima tolerated by aggressive pooling.
    pub t1: usize,
}

impl PoolConfig {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            eps: DEFAULT_EPS,
            t1: 1,
        }
    }

    pub fn with_eps(mut self, eps: f32) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_t1(mut self, t1: usize) -> Self {
        self.t1 = t1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config("pool kernel and stride must be >= 1".into()));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config(format!("pool eps must be > 0, got {}", self.eps)));
        }
        if self.t1 == 0 {
            return Err(Error::Config("t1 must be >= 1".into()));
        }
        Ok(())
    }

    /// Pooled shape for an input of shape `input`.
    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        self.validate()?;
        if input.h < self.kernel || input.w < self.kernel {
            return Err(Error::shape(format!(
                "pool window {k}x{k} larger than plane {}x{}",
                input.h,
                input.w,
                k = self.kernel
            )));
        }
        Ok(Shape4::new(
            input.n,
            input.c,
            (input.h - self.kernel) / self.stride + 1,
            (input.w - self.kernel) / self.stride + 1,
        ))
    }
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self::new(2, 2)
    }
}

/// Per-cell sets of plane indices tied for the window maximum, stored CSR style.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSets {
    offsets: Vec<usize>,
    indices: Vec<u32>,
}

impl IndexSets {
    fn with_capacity(cells: usize) -> Self {
        let mut offsets = Vec::with_capacity(cells + 1);
        offsets.push(0);
        Self {
            offsets,
            indices: Vec::with_capacity(cells),
        }
    }

    fn push_cell(&mut self, set: impl IntoIterator<Item = u32>) {
        self.indices.extend(set);
        self.offsets.push(self.indices.len());
    }

    /// Each single index becomes a singleton set.
    pub fn from_single(indices: &[u32]) -> Self {
        let mut sets = Self::with_capacity(indices.len());
        for &i in indices {
            sets.push_cell([i]);
        }
        sets
    }

    pub fn from_sets<I, S>(sets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = u32>,
    {
        let mut out = Self::with_capacity(0);
        for s in sets {
            out.push_cell(s);
        }
        out
    }

    pub fn cells(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn get(&self, cell: usize) -> &[u32] {
        &self.indices[self.offsets[cell]..self.offsets[cell + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.cells()).map(move |c| self.get(c))
    }

    pub fn all_singletons(&self) -> bool {
        self.iter().all(|s| s.len() == 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoolIndices {
    Single(Vec<u32>),
    Sets(IndexSets),
}

impl PoolIndices {
    pub fn cells(&self) -> usize {
        match self {
            PoolIndices::Single(v) => v.len(),
            PoolIndices::Sets(s) => s.cells(),
        }
    }

    /// View as index sets; single indices become singletons.
    pub fn to_sets(&self) -> IndexSets {
        match self {
            PoolIndices::Single(v) => IndexSets::from_single(v),
            PoolIndices::Sets(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoolOutput {
    pub values: Tensor4,
    pub indices: PoolIndices,
    /// Shape of the pooled input, i.e. the natural unpool target.
    pub input_shape: Shape4,
}

impl PoolOutput {
    pub fn single(&self) -> Option<&[u32]> {
        match &self.indices {
            PoolIndices::Single(v) => Some(v),
            PoolIndices::Sets(_) => None,
        }
    }

    pub fn sets(&self) -> Option<&IndexSets> {
        match &self.indices {
            PoolIndices::Sets(s) => Some(s),
            PoolIndices::Single(_) => None,
        }
    }
}

/// One window's scan result. `first` is `None` for all-NaN windows.
struct WindowScan {
    max: f32,
    first: Option<u32>,
    origin: u32,
}

fn scan_window(plane: &[f32], width: usize, h0: usize, w0: usize, k: usize) -> WindowScan {
    let origin = (h0 * width + w0) as u32;
    let mut max = f32::NEG_INFINITY;
    let mut first = None;
    for i in 0..k {
        let row = (h0 + i) * width;
        for j in 0..k {
            let idx = row + w0 + j;
            let v = plane[idx];
            // strict > keeps the first occurrence; NaN compares false
            if !v.is_nan() && (first.is_none() || v > max) {
                max = v;
                first = Some(idx as u32);
            }
        }
    }
    WindowScan { max, first, origin }
}

fn near_max(v: f32, max: f32, eps: f32) -> bool {
    // infinities tie only with themselves; inf - inf would be NaN
    v == max || (v - max).abs() < eps
}

fn pool_planes<F>(x: &Tensor4, cfg: &PoolConfig, mut per_window: F) -> Result<(Shape4, Vec<f32>)>
where
    F: FnMut(&[f32], usize, usize, usize) -> f32,
{
    let out_shape = cfg.output_shape(x.shape())?;
    let s = x.shape();
    let mut values = Vec::with_capacity(out_shape.numel());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = x.plane(n, c);
            for oh in 0..out_shape.h {
                for ow in 0..out_shape.w {
                    values.push(per_window(plane, s.w, oh * cfg.stride, ow * cfg.stride));
                }
            }
        }
    }
    Ok((out_shape, values))
}

/// Standard max pooling with first-occurrence tie-breaking.
pub fn max_pool(x: &Tensor4, cfg: &PoolConfig) -> Result<PoolOutput> {
    let mut indices = Vec::new();
    let (shape, values) = pool_planes(x, cfg, |plane, width, h0, w0| {
        let scan = scan_window(plane, width, h0, w0, cfg.kernel);
        match scan.first {
            Some(i) => {
                indices.push(i);
                scan.max
            }
            None => {
                indices.push(scan.origin);
                CANONICAL_NAN
            }
        }
    })?;
    Ok(PoolOutput {
        values: Tensor4::from_parts(shape, values)?,
        indices: PoolIndices::Single(indices),
        input_shape: x.shape(),
    })
}

/// Max pooling that records every index within `eps` of the maximum.
pub fn multi_max_pool(x: &Tensor4, cfg: &PoolConfig) -> Result<PoolOutput> {
    let k = cfg.kernel;
    let mut sets = IndexSets::with_capacity(x.len() / (k * k).max(1));
    let (shape, values) = pool_planes(x, cfg, |plane, width, h0, w0| {
        let scan = scan_window(plane, width, h0, w0, k);
        if scan.first.is_none() {
            sets.push_cell([scan.origin]);
            return CANONICAL_NAN;
        }
        let mut set = Vec::with_capacity(k * k);
        for i in 0..k {
            let row = (h0 + i) * width;
            for j in 0..k {
                let idx = row + w0 + j;
                let v = plane[idx];
                if !v.is_nan() && near_max(v, scan.max, cfg.eps) {
                    set.push(idx as u32);
                }
            }
        }
        sets.push_cell(set);
        scan.max
    })?;
    Ok(PoolOutput {
        values: Tensor4::from_parts(shape, values)?,
        indices: PoolIndices::Sets(sets),
        input_shape: x.shape(),
    })
}

/// Max pooling that emits `(NaN, window top-left)` when more than `t1`
/// non-NaN values lie within `eps` of the maximum.
pub fn aggressive_max_pool(x: &Tensor4, cfg: &PoolConfig) -> Result<PoolOutput> {
    let k = cfg.kernel;
    let mut indices = Vec::new();
    let (shape, values) = pool_planes(x, cfg, |plane, width, h0, w0| {
        let scan = scan_window(plane, width, h0, w0, k);
        let Some(first) = scan.first else {
            indices.push(scan.origin);
            return CANONICAL_NAN;
        };
        let mut counter = 0usize;
        for i in 0..k {
            let row = (h0 + i) * width;
            for &v in &plane[row + w0..row + w0 + k] {
                if !v.is_nan() && near_max(v, scan.max, cfg.eps) {
                    counter += 1;
                }
            }
        }
        if counter > cfg.t1 {
            indices.push(scan.origin);
            CANONICAL_NAN
        } else {
            indices.push(first);
            scan.max
        }
    })?;
    Ok(PoolOutput {
        values: Tensor4::from_parts(shape, values)?,
        indices: PoolIndices::Single(indices),
        input_shape: x.shape(),
    })
}

fn check_unpool(values: &Tensor4, cells: usize, out_shape: Shape4) -> Result<()> {
    let v = values.shape();
    if cells != v.numel() {
        return Err(Error::shape(format!(
            "{} index cells for {} pooled values",
            cells,
            v.numel()
        )));
    }
    if v.n != out_shape.n || v.c != out_shape.c {
        return Err(Error::shape(format!(
            "unpool target {out_shape} does not match pooled values {v}"
        )));
    }
    Ok(())
}

fn check_index(idx: u32, plane_len: usize) -> Result<usize> {
    let idx = idx as usize;
    if idx >= plane_len {
        return Err(Error::Index(format!(
            "index {idx} outside plane of {plane_len} elements"
        )));
    }
    Ok(idx)
}

/// Writes each pooled value at its recorded index; zeros elsewhere.
///
/// With overlapping windows a later cell overwrites an earlier one.
pub fn max_unpool(values: &Tensor4, indices: &[u32], out_shape: Shape4) -> Result<Tensor4> {
    check_unpool(values, indices.len(), out_shape)?;
    let cells_per_plane = values.shape().plane_len();
    let plane_len = out_shape.plane_len();
    let mut out = vec![0.0f32; out_shape.numel()];
    for (plane_no, out_plane) in out.chunks_exact_mut(plane_len.max(1)).enumerate() {
        let base = plane_no * cells_per_plane;
        let cells = &indices[base..base + cells_per_plane];
        for (&i, &v) in cells.iter().zip(&values.data()[base..base + cells_per_plane]) {
            out_plane[check_index(i, plane_len)?] = crate::tensor::canonicalize(v);
        }
    }
    Tensor4::from_parts(out_shape, out)
}

/// Conservative unpooling: a singleton set receives the pooled value, a
/// larger set receives NaN at every member and the value is dropped.
pub fn conservative_unpool(values: &Tensor4, sets: &IndexSets, out_shape: Shape4) -> Result<Tensor4> {
    check_unpool(values, sets.cells(), out_shape)?;
    let cells_per_plane = values.shape().plane_len();
    let plane_len = out_shape.plane_len();
    let mut out = vec![0.0f32; out_shape.numel()];
    for (plane_no, out_plane) in out.chunks_exact_mut(plane_len.max(1)).enumerate() {
        let base = plane_no * cells_per_plane;
        for cell in base..base + cells_per_plane {
            let set = sets.get(cell);
            match set {
                [] => {}
                [single] => {
                    let idx = check_index(*single, plane_len)?;
                    out_plane[idx] = crate::tensor::canonicalize(values.data()[cell]);
                }
                many => {
                    for &i in many {
                        let idx = check_index(i, plane_len)?;
                        out_plane[idx] = CANONICAL_NAN;
                    }
                }
            }
        }
    }
    Tensor4::from_parts(out_shape, out)
}

/// Writes index data as little-endian `u32` runs: for every cell, its set
/// size followed by that many indices. Single indices are runs of length one.
pub fn write_index_sidecar(indices: &PoolIndices, mut w: impl Write) -> std::io::Result<()> {
    let sets = indices.to_sets();
    for set in sets.iter() {
        w.write_all(&(set.len() as u32).to_le_bytes())?;
        for i in set {
            w.write_all(&i.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_index_sidecar(mut r: impl Read) -> Result<IndexSets> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::format("sidecar", e.to_string()))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format("sidecar", "length is not a multiple of 4"));
    }
    let words: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let mut sets = IndexSets::with_capacity(0);
    let mut pos = 0;
    while pos < words.len() {
        let len = words[pos] as usize;
        let run = words
            .get(pos + 1..pos + 1 + len)
            .ok_or_else(|| Error::format("sidecar", format!("truncated run at word {pos}")))?;
        sets.push_cell(run.iter().copied());
        pos += 1 + len;
    }
    Ok(sets)
}

pub fn save_index_sidecar(indices: &PoolIndices, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_index_sidecar(indices, &mut buf).map_err(|e| Error::io(path.as_ref(), e))?;
    crate::io::write_file(path.as_ref(), &buf)
}
