//! Standard vs NaN-aware convolution on a plane with a NaN hole, across
//! thresholds and both substitutions.
//!
//! cargo run --example nan_conv

use nanskip::convolution::{conv2d, nan_conv2d_with_stats, ConvConfig, Substitution};
use nanskip::network::zoo::random_kernel;
use nanskip::{Shape4, Tensor4};

fn main() -> nanskip::Result<()> {
    let x = Tensor4::from_fn((1, 2, 12, 12), |_, c, h, w| {
        if (3..8).contains(&h) && (4..9).contains(&w) {
            f32::NAN
        } else {
            (c + h + w) as f32 / 10.0
        }
    });
    let k = random_kernel(Shape4::new(4, 2, 3, 3), 7, true);

    let y = conv2d(&x, &k, &ConvConfig::new(1, 1))?;
    println!("standard: {} of {} outputs NaN", y.nan_count(), y.len());

    for t2 in [1.0, 0.8, 0.5, 0.2] {
        for sub in [Substitution::Mean, Substitution::Gaussian] {
            let cfg = ConvConfig::new(1, 1).with_t2(t2).with_substitution(sub).with_seed(1);
            let (y, stats) = nan_conv2d_with_stats(&x, &k, &cfg)?;
            println!(
                "t2 {t2:.1} {sub:<8}: skipped {:3}/{} ({:.3}), NaN outputs {}",
                stats.skipped,
                stats.total,
                stats.skip_ratio(),
                y.nan_count()
            );
        }
    }
    let (_, stats) = nan_conv2d_with_stats(&x, &k, &ConvConfig::new(1, 1))?;
    println!("NaN ratio histogram {:?}", stats.histogram);
    Ok(())
}
