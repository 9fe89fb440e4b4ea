//! Per-layer skip ratios of a toy U-Net on a brain-like image as the skip
//! threshold falls.
//!
//! cargo run --release --example sweep -- [side]

use nanskip::bench::{brain_like, run_threshold_sweep, sweep_to_csv, BrainLike, DEFAULT_SWEEP};
use nanskip::network::{zoo, Mode};

fn main() -> nanskip::Result<()> {
    let side = std::env::args()
        .nth(1)
        .map_or(64, |s| s.parse().expect("side must be an integer"));
    let x = brain_like(&BrainLike {
        side,
        ..BrainLike::default()
    })?;
    let res = run_threshold_sweep(&zoo::toy_unet(1, 8, 0), &x, &DEFAULT_SWEEP, Mode::Conservative)?;
    print!("{}", sweep_to_csv(&res, 0, rayon::current_num_threads()));
    for &(t2, ratio) in &res.aggregate {
        println!("t2 {t2:.1}: {:.1}% of windows skipped", 100.0 * ratio);
    }
    Ok(())
}
