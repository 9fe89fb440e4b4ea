//! Overlap and image-quality metrics.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Label treated as background and left out of [`dice`].
pub const BACKGROUND: i64 = 0;

/// Mean Dice-Sorensen coefficient over foreground labels present in either
/// operand. Two all-background masks score 1.
pub fn dice_labels(a: &[i64], b: &[i64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "label lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let labels: BTreeSet<i64> = a.iter().chain(b).copied().filter(|&l| l != BACKGROUND).collect();
    if labels.is_empty() {
        return Ok(1.0);
    }
    let sum: f64 = labels
        .iter()
        .map(|&l| {
            let (mut inter, mut na, mut nb) = (0u64, 0u64, 0u64);
            for (&x, &y) in a.iter().zip(b) {
                na += u64::from(x == l);
                nb += u64::from(y == l);
                inter += u64::from(x == l && y == l);
            }
            2.0 * inter as f64 / (na + nb) as f64
        })
        .sum();
    Ok(sum / labels.len() as f64)
}

fn labels_of(t: &Tensor4, field: &'static str) -> Result<Vec<i64>> {
    t.data()
        .iter()
        .map(|&v| {
            if v.is_finite() && v.fract() == 0.0 {
                Ok(v as i64)
            } else {
                Err(Error::format(field, format!("label value {v} is not an integer")))
            }
        })
        .collect()
}

/// [`dice_labels`] on integer-valued tensors.
pub fn dice(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "dice operands differ: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    dice_labels(&labels_of(a, "a")?, &labels_of(b, "b")?)
}

/// `10 log10(peak^2 / MSE)` in dB; `+inf` when the tensors are equal.
pub fn psnr(a: &Tensor4, b: &Tensor4, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "psnr operands differ: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    if a.has_nan() || b.has_nan() {
        return Err(Error::format("data", "psnr operands must be NaN-free"));
    }
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::Config(format!("peak must be positive, got {peak}")));
    }
    if a.is_empty() {
        return Err(Error::shape("psnr of empty tensors"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// CSV rendering of a metric value; infinity becomes `inf`.
pub fn format_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}
