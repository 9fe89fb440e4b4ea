//! PSNR and Dice between a reference and a noisy copy.
//!
//! cargo run --example metrics

use nanskip::bench::{dice, format_metric, psnr, uniform};
use nanskip::{Rng, Tensor4};

fn main() -> nanskip::Result<()> {
    let mut rng = Rng::new(0);
    let reference = uniform((1, 1, 32, 32), &mut rng);
    for noise in [0.0, 0.01, 0.1] {
        let data = reference
            .data()
            .iter()
            .map(|&v| v + noise * rng.uniform(-1.0, 1.0) as f32)
            .collect();
        let noisy = Tensor4::from_parts(reference.shape(), data)?;
        println!(
            "noise {noise:.2}: psnr {} dB",
            format_metric(psnr(&noisy, &reference, 1.0)?)
        );
    }

    let labels = |shift: usize| Tensor4::from_fn((1, 1, 16, 16), |_, _, h, w| ((h + shift) / 8 * 2 + w / 8) as f32);
    for shift in [0, 2, 4] {
        println!(
            "label shift {shift}: dice {}",
            format_metric(dice(&labels(shift), &labels(0))?)
        );
    }
    Ok(())
}
