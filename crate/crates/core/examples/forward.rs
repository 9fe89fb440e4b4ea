//! A toy U-Net in all three modes, with the per-layer report, and a
//! save/load roundtrip through the text graph format.
//!
//! cargo run --example forward -- [out_dir]

use nanskip::bench::{brain_like, BrainLike};
use nanskip::network::{forward, load_graph, save_graph, zoo, Mode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, Into::into);
    let x = brain_like(&BrainLike {
        side: 32,
        ..BrainLike::default()
    })?;
    let graph = zoo::toy_unet(1, 8, 0);

    for mode in [Mode::Standard, Mode::Conservative, Mode::Aggressive] {
        let (y, report) = forward(&graph, &x, mode)?;
        println!("== {mode}: {} NaN outputs of {}", y.nan_count(), y.len());
        print!("{}", report.to_csv());
    }

    let path = save_graph(&graph, &dir, "toy_unet")?;
    println!("saved {}", path.display());
    print!("{}", std::fs::read_to_string(&path)?);
    let loaded = load_graph(&path)?;
    let (a, _) = forward(&graph, &x, Mode::Conservative)?;
    let (b, _) = forward(&loaded, &x, Mode::Conservative)?;
    println!("reloaded graph matches: {}", a.bit_eq(&b));
    Ok(())
}
