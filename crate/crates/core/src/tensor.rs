//! Dense NCHW tensors, convolution kernels and sliding windows.

use std::fmt;

use crate::error::{Error, Result};

/// The quiet NaN written by every operator in this crate.
///
/// Payloads of incoming NaNs are never inspected; outputs are always
/// canonicalized to this bit pattern.
pub const CANONICAL_NAN: f32 = f32::from_bits(0x7fc0_0000);

/// Returns `v`, or [`CANONICAL_NAN`] if `v` is any NaN.
#[inline]
pub fn canonicalize(v: f32) -> f32 {
    if v.is_nan() {
        CANONICAL_NAN
    } else {
        v
    }
}

/// Extent of a 4D tensor in (batch, channels, height, width) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane_len(&self) -> usize {
        self.h * self.w
    }

    /// Row-major offset of `(n, c, h, w)`; `w` varies fastest.
    #[inline]
    pub const fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    /// Inverse of [`Shape4::offset`].
    pub const fn unravel(&self, offset: usize) -> (usize, usize, usize, usize) {
        let w = offset % self.w;
        let rest = offset / self.w;
        let h = rest % self.h;
        let rest = rest / self.h;
        (rest / self.c, rest % self.c, h, w)
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl From<(usize, usize, usize, usize)> for Shape4 {
    fn from((n, c, h, w): (usize, usize, usize, usize)) -> Self {
        Self { n, c, h, w }
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense row-major NCHW `f32` tensor. Elements may be NaN.
#[derive(Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape4,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor4")
            .field("shape", &self.shape)
            .field("nan_count", &self.nan_count())
            .finish()
    }
}

impl Tensor4 {
    /// Builds a tensor from its shape and flat row-major data.
    pub fn from_parts(shape: impl Into<Shape4>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if data.len() != shape.numel() {
            return Err(Error::shape(format!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.numel()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Shape4>) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: impl Into<Shape4>, value: f32) -> Self {
        let shape = shape.into();
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` for every element.
    pub fn from_fn(shape: impl Into<Shape4>, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.shape.offset(n, c, h, w)]
    }

    /// The `(n, c)` spatial plane as a flat `h * w` slice.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let len = self.shape.plane_len();
        let start = (n * self.shape.c + c) * len;
        &self.data[start..start + len]
    }

    /// All channels of batch item `n`, as a flat `c * h * w` slice.
    pub fn sample(&self, n: usize) -> &[f32] {
        let len = self.shape.c * self.shape.plane_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn nan_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_nan()).count()
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    /// Applies `f` element-wise, keeping the shape.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(self, shape: impl Into<Shape4>) -> Result<Self> {
        Self::from_parts(shape, self.data)
    }

    /// Bitwise equality of the data, treating identical NaN bit patterns as equal.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Window of `(channels, kh, kw)` elements anchored at `(n, 0, h0, w0)`.
    ///
    /// `h0`/`w0` may be negative or run past the edge; such positions read
    /// as zero padding.
    pub fn window(&self, n: usize, h0: isize, w0: isize, kh: usize, kw: usize) -> Window<'_> {
        Window {
            owner: self,
            n,
            c0: 0,
            channels: self.shape.c,
            h0,
            w0,
            kh,
            kw,
        }
    }

    /// Single-channel window on plane `(n, c)`.
    pub fn plane_window(&self, n: usize, c: usize, h0: isize, w0: isize, kh: usize, kw: usize) -> Window<'_> {
        Window {
            owner: self,
            n,
            c0: c,
            channels: 1,
            h0,
            w0,
            kh,
            kw,
        }
    }
}

/// A 4D convolution kernel `(C_out, C_in, H_k, W_k)` with optional bias.
///
/// Kernels are trained parameters and never carry NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel4 {
    shape: Shape4,
    data: Vec<f32>,
    bias: Option<Vec<f32>>,
}

impl Kernel4 {
    /// `shape` is `(C_out, C_in, H_k, W_k)`.
    pub fn new(shape: impl Into<Shape4>, data: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() == 0 {
            return Err(Error::shape(format!("kernel shape {shape} is empty")));
        }
        if data.len() != shape.numel() {
            return Err(Error::shape(format!(
                "kernel data length {} does not match shape {shape}",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::shape("kernel data contains NaN"));
        }
        if let Some(b) = &bias {
            if b.len() != shape.n {
                return Err(Error::shape(format!(
                    "bias length {} does not match C_out {}",
                    b.len(),
                    shape.n
                )));
            }
            if b.iter().any(|v| v.is_nan()) {
                return Err(Error::shape("bias contains NaN"));
            }
        }
        Ok(Self { shape, data, bias })
    }

    pub fn from_tensor(weights: Tensor4, bias: Option<Vec<f32>>) -> Result<Self> {
        let shape = weights.shape();
        Self::new(shape, weights.into_data(), bias)
    }

    pub fn c_out(&self) -> usize {
        self.shape.n
    }

    pub fn c_in(&self) -> usize {
        self.shape.c
    }

    pub fn kh(&self) -> usize {
        self.shape.h
    }

    pub fn kw(&self) -> usize {
        self.shape.w
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    /// Elements per output channel: `C_in * H_k * W_k`.
    pub fn volume(&self) -> usize {
        self.shape.c * self.shape.h * self.shape.w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Weights of output channel `oc` in `(c, h, w)` order.
    pub fn filter(&self, oc: usize) -> &[f32] {
        let v = self.volume();
        &self.data[oc * v..(oc + 1) * v]
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }
}

/// A view of `channels x kh x kw` elements of a tensor, anchored at `(n, c0, h0, w0)`.
///
/// Positions outside the owner's spatial bounds are zero padding: they read as
/// `0.0` and are never NaN.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    owner: &'a Tensor4,
    n: usize,
    c0: usize,
    channels: usize,
    h0: isize,
    w0: isize,
    kh: usize,
    kw: usize,
}

impl<'a> Window<'a> {
    pub fn volume(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn extent(&self) -> (usize, usize, usize) {
        (self.channels, self.kh, self.kw)
    }

    pub fn origin(&self) -> (usize, usize, isize, isize) {
        (self.n, self.c0, self.h0, self.w0)
    }

    /// Flat owner offset of window element `(c, i, j)`, or `None` for padding.
    pub fn owner_offset(&self, c: usize, i: usize, j: usize) -> Option<usize> {
        let s = self.owner.shape;
        let h = self.h0 + i as isize;
        let w = self.w0 + j as isize;
        if h < 0 || w < 0 || h as usize >= s.h || w as usize >= s.w {
            return None;
        }
        Some(s.offset(self.n, self.c0 + c, h as usize, w as usize))
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f32 {
        self.owner_offset(c, i, j).map_or(0.0, |o| self.owner.data[o])
    }

    /// Elements in `(c, h, w)` scan order, padding as `0.0`.
    pub fn values(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.volume());
        for c in 0..self.channels {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    out.push(self.get(c, i, j));
                }
            }
        }
        out
    }

    pub fn nan_count(&self) -> usize {
        self.values().iter().filter(|v| v.is_nan()).count()
    }
}

/// Fraction of NaN elements in the window; padding counts as non-NaN.
pub fn nan_ratio(window: &Window<'_>) -> f64 {
    ratio_of(window.nan_count(), window.volume())
}

#[inline]
pub(crate) fn ratio_of(nans: usize, volume: usize) -> f64 {
    nans as f64 / volume as f64
}
