//! Synthetic inputs: NaN placement policies and a brain-like test image.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Shape4, Tensor4, CANONICAL_NAN};

pub const DEFAULT_BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// Independent Bernoulli draw per element.
    Random,
    /// Whole square blocks, in shuffled order, until the target count is met.
    #[default]
    Block,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Random => "random",
            Placement::Block => "block",
        })
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Placement::Random),
            "block" => Ok(Placement::Block),
            other => Err(Error::Config(format!("unknown placement '{other}' (random|block)"))),
        }
    }
}

/// Boolean NaN mask for an `h x w` plane.
///
/// `Block` marks exactly `round(density * h * w)` elements: whole tiles of
/// side `block` in random order, the last one filled row-major up to the
/// target. `Random` marks each element with probability `density`.
pub fn nan_mask(
    h: usize,
    w: usize,
    density: f64,
    placement: Placement,
    block: usize,
    rng: &mut Rng,
) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Config(format!("density must lie in [0, 1], got {density}")));
    }
    if block == 0 {
        return Err(Error::Config("block side must be positive".into()));
    }
    let mut mask = vec![false; h * w];
    match placement {
        Placement::Random => {
            for m in &mut mask {
                *m = rng.bernoulli(density);
            }
        }
        Placement::Block => {
            let mut remaining = (density * (h * w) as f64).round() as usize;
            let mut tiles: Vec<(usize, usize)> = (0..h.div_ceil(block))
                .flat_map(|i| (0..w.div_ceil(block)).map(move |j| (i * block, j * block)))
                .collect();
            rng.shuffle(&mut tiles);
            'tiles: for (r0, c0) in tiles {
                for r in r0..(r0 + block).min(h) {
                    for c in c0..(c0 + block).min(w) {
                        if remaining == 0 {
                            break 'tiles;
                        }
                        mask[r * w + c] = true;
                        remaining -= 1;
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// Copy of `x` with NaNs placed independently in every `(n, c)` plane.
pub fn place_nans(x: &Tensor4, density: f64, placement: Placement, block: usize, rng: &mut Rng) -> Result<Tensor4> {
    let s = x.shape();
    let mut data = x.data().to_vec();
    for plane in data.chunks_mut(s.plane_len().max(1)) {
        let mask = nan_mask(s.h, s.w, density, placement, block, rng)?;
        for (v, m) in plane.iter_mut().zip(mask) {
            if m {
                *v = CANONICAL_NAN;
            }
        }
    }
    Tensor4::from_parts(s, data)
}

/// Values uniform in `[0, 1)`.
pub fn uniform(shape: impl Into<Shape4>, rng: &mut Rng) -> Tensor4 {
    Tensor4::from_fn(shape, |_, _, _, _| rng.unit_f64() as f32)
}

/// Parameters of [`brain_like`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrainLike {
    pub side: usize,
    /// Fraction of the plane covered by the elliptical foreground.
    pub foreground: f64,
    pub background: f32,
    pub seed: u64,
}

impl Default for BrainLike {
    fn default() -> Self {
        Self {
            side: 64,
            foreground: 0.4,
            background: 0.0,
            seed: 0,
        }
    }
}

/// A `(1, 1, side, side)` image: a centred ellipse of smooth noise in
/// `[0.3, 1.0]` on a constant background.
pub fn brain_like(p: &BrainLike) -> Result<Tensor4> {
    if p.side == 0 || !(0.0..=0.75).contains(&p.foreground) {
        return Err(Error::Config(format!(
            "brain-like image needs side > 0 and foreground in [0, 0.75], got {} and {}",
            p.side, p.foreground
        )));
    }
    let mut rng = Rng::new(p.seed);
    // value noise on a coarse lattice, bilinearly interpolated
    let cells = 6;
    let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.unit_f64()).collect();
    let at = |i: usize, j: usize| lattice[i * (cells + 1) + j];
    let noise = |y: f64, x: f64| {
        let (fy, fx) = (y * cells as f64, x * cells as f64);
        let (i, j) = ((fy as usize).min(cells - 1), (fx as usize).min(cells - 1));
        let (ty, tx) = (fy - i as f64, fx - j as f64);
        let top = at(i, j) * (1.0 - tx) + at(i, j + 1) * tx;
        let bottom = at(i + 1, j) * (1.0 - tx) + at(i + 1, j + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    };

    let side = p.side as f64;
    // area pi * a * b = foreground * side^2 with b = 0.8 a
    let a = (p.foreground * side * side / (0.8 * std::f64::consts::PI)).sqrt();
    let b = 0.8 * a;
    let centre = (side - 1.0) / 2.0;
    Ok(Tensor4::from_fn((1, 1, p.side, p.side), |_, _, r, c| {
        let (dy, dx) = (r as f64 - centre, c as f64 - centre);
        if a > 0.0 && (dx / a).powi(2) + (dy / b).powi(2) <= 1.0 {
            let y = r as f64 / (side - 1.0).max(1.0);
            let x = c as f64 / (side - 1.0).max(1.0);
            (0.3 + 0.7 * noise(y, x)) as f32
        } else {
            p.background
        }
    }))
}

/// A plane whose values are pairwise distinct: a random permutation of
/// `offset + step * i`.
pub fn distinct(shape: impl Into<Shape4>, offset: f32, step: f32, rng: &mut Rng) -> Tensor4 {
    let shape = shape.into();
    let mut order: Vec<usize> = (0..shape.numel()).collect();
    rng.shuffle(&mut order);
    let data = order.into_iter().map(|i| offset + step * i as f32).collect();
    Tensor4::from_parts(shape, data).expect("length matches")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_mask_hits_target_exactly() {
        let mut rng = Rng::new(3);
        for d in [0.0, 0.33, 0.5, 0.9, 1.0] {
            let m = nan_mask(50, 70, d, Placement::Block, 16, &mut rng).unwrap();
            let want = (d * 3500.0).round() as usize;
            assert_eq!(m.iter().filter(|&&b| b).count(), want);
        }
    }

    #[test]
    fn random_mask_density() {
        let m = nan_mask(200, 200, 0.3, Placement::Random, 16, &mut Rng::new(1)).unwrap();
        let frac = m.iter().filter(|&&b| b).count() as f64 / 40_000.0;
        assert!((frac - 0.3).abs() < 0.01);
    }

    #[test]
    fn bad_density() {
        assert!(nan_mask(4, 4, 1.5, Placement::Random, 16, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn brain_like_layout() {
        let img = brain_like(&BrainLike {
            side: 64,
            foreground: 0.4,
            background: 0.0,
            seed: 5,
        })
        .unwrap();
        let fg = img.data().iter().filter(|&&v| v != 0.0).count() as f64 / 4096.0;
        assert!((fg - 0.4).abs() < 0.03, "{fg}");
        assert_eq!(img.get(0, 0, 0, 0), 0.0);
        assert!(img.data().iter().all(|v| *v == 0.0 || (0.3..=1.0).contains(v)));
    }

    #[test]
    fn distinct_values() {
        let t = distinct((1, 1, 8, 8), 1.0, 0.5, &mut Rng::new(2));
        let mut v: Vec<f32> = t.data().to_vec();
        v.sort_by(f32::total_cmp);
        v.dedup();
        assert_eq!(v.len(), 64);
    }

    #[test]
    fn placement_parse() {
        assert_eq!("Block".parse::<Placement>().unwrap(), Placement::Block);
        assert!("grid".parse::<Placement>().is_err());
    }
}
