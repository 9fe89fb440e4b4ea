//! Brute-force oracles and generators shared by the integration tests.
#![allow(dead_code)]

use nanskip::network::zoo::random_kernel;
use nanskip::network::{GraphBuilder, LayerGraph};
use nanskip::{Kernel4, Rng, Shape4, Tensor4};

/// Convolution geometry for the oracles.
#[derive(Debug, Clone, Copy)]
pub struct Geom {
    pub c_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Geom {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kh) / self.stride + 1,
            (w + 2 * self.pad - self.kw) / self.stride + 1,
        )
    }
}

/// NaN count and volume of every window, in `(n, oh, ow)` order, by direct
/// re-scan of the input. Padding is zero, hence not NaN.
pub fn window_nan_counts(x: &Tensor4, g: &Geom) -> Vec<(usize, usize)> {
    let s = x.shape();
    let (oh_n, ow_n) = g.out_hw(s.h, s.w);
    let mut out = Vec::new();
    for n in 0..s.n {
        for oh in 0..oh_n {
            for ow in 0..ow_n {
                let mut nans = 0;
                for c in 0..s.c {
                    for i in 0..g.kh {
                        for j in 0..g.kw {
                            let h = (oh * g.stride + i) as isize - g.pad as isize;
                            let w = (ow * g.stride + j) as isize - g.pad as isize;
                            if h >= 0
                                && w >= 0
                                && (h as usize) < s.h
                                && (w as usize) < s.w
                                && x.get(n, c, h as usize, w as usize).is_nan()
                            {
                                nans += 1;
                            }
                        }
                    }
                }
                out.push((nans, s.c * g.kh * g.kw));
            }
        }
    }
    out
}

/// Expected skip flag per `(n, oh, ow)`: `r >= t2`, except that a window of
/// volume one is skipped exactly when its element is NaN.
pub fn skip_oracle(x: &Tensor4, g: &Geom, t2: f64) -> Vec<bool> {
    window_nan_counts(x, g)
        .into_iter()
        .map(|(nans, vol)| {
            if vol == 1 {
                nans == 1
            } else {
                nans as f64 / vol as f64 >= t2
            }
        })
        .collect()
}

/// Output positions `(n, oh, ow)` at which every channel of `y` is NaN.
pub fn nan_positions(y: &Tensor4) -> Vec<bool> {
    let s = y.shape();
    let mut out = Vec::with_capacity(s.n * s.h * s.w);
    for n in 0..s.n {
        for h in 0..s.h {
            for w in 0..s.w {
                let nan: Vec<bool> = (0..s.c).map(|c| y.get(n, c, h, w).is_nan()).collect();
                assert!(nan.iter().all(|&b| b == nan[0]), "channels disagree at ({n}, {h}, {w})");
                out.push(nan[0]);
            }
        }
    }
    out
}

pub fn random_tensor(shape: Shape4, rng: &mut Rng) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| rng.uniform(-2.0, 2.0) as f32)
}

pub fn with_random_nans(x: &Tensor4, p: f64, rng: &mut Rng) -> Tensor4 {
    let data = x
        .data()
        .iter()
        .map(|&v| if rng.bernoulli(p) { f32::NAN } else { v })
        .collect();
    Tensor4::from_parts(x.shape(), data).unwrap()
}

pub fn random_conv_kernel(c_out: usize, c_in: usize, kh: usize, kw: usize, seed: u64) -> Kernel4 {
    random_kernel(Shape4::new(c_out, c_in, kh, kw), seed, true)
}

/// True when every `k x k` pooling window of every plane holds pairwise
/// values at least `gap` apart.
pub fn windows_distinct(x: &Tensor4, k: usize, stride: usize, gap: f32) -> bool {
    let s = x.shape();
    for n in 0..s.n {
        for c in 0..s.c {
            for oh in 0..(s.h - k) / stride + 1 {
                for ow in 0..(s.w - k) / stride + 1 {
                    let mut v = Vec::new();
                    for i in 0..k {
                        for j in 0..k {
                            v.push(x.get(n, c, oh * stride + i, ow * stride + j));
                        }
                    }
                    for a in 0..v.len() {
                        for b in a + 1..v.len() {
                            if (v[a] - v[b]).is_nan() || (v[a] - v[b]).abs() < gap {
                                return false;
                            }
                        }
                    }
                }
            }
        }
    }
    true
}

/// `(1, 1, side, side)` plane of `background` with a centred square of side
/// `fg` holding distinct values `1 + i / 64`. `side` and `fg` must be even.
pub fn background_with_distinct_square(side: usize, fg: usize, background: f32, seed: u64) -> Tensor4 {
    let lo = (side - fg) / 2;
    let fore = nanskip::bench::distinct((1, 1, fg, fg), 1.0, 1.0 / 64.0, &mut Rng::new(seed));
    Tensor4::from_fn((1, 1, side, side), |_, _, h, w| {
        if (lo..lo + fg).contains(&h) && (lo..lo + fg).contains(&w) {
            fore.get(0, 0, h - lo, w - lo)
        } else {
            background
        }
    })
}

/// `conv -> pool -> conv -> unpool -> conv` with random weights.
pub fn unet(seed: u64) -> LayerGraph {
    nanskip::network::zoo::toy_unet(1, 4, seed)
}

/// A single 1x1 convolution with weight one and no bias.
pub fn identity_graph() -> LayerGraph {
    GraphBuilder::new()
        .conv("id", Kernel4::new((1, 1, 1, 1), vec![1.0], None).unwrap(), 1, 0)
        .build()
        .unwrap()
}
