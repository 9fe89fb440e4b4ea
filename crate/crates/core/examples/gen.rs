//! Synthetic inputs: brain-like, uniform and distinct planes, with random or
//! block NaN placement, written as NPY.
//!
//! cargo run --example gen -- [out_dir]

use nanskip::bench::{brain_like, distinct, place_nans, uniform, BrainLike, Placement};
use nanskip::io::save_npy;
use nanskip::Rng;

fn main() -> nanskip::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, Into::into);
    let mut rng = Rng::new(0);
    let inputs = [
        ("brain", brain_like(&BrainLike::default())?),
        ("uniform", uniform((1, 1, 64, 64), &mut rng)),
        ("distinct", distinct((1, 1, 64, 64), 1.0, 1.0 / 64.0, &mut rng)),
    ];
    for (name, clean) in &inputs {
        for placement in [Placement::Random, Placement::Block] {
            let x = place_nans(clean, 0.5, placement, 16, &mut rng)?;
            let path = dir.join(format!("{name}_{placement}.npy"));
            save_npy(&x, &path)?;
            println!("{}: {} NaN of {}", path.display(), x.nan_count(), x.len());
        }
    }
    Ok(())
}
