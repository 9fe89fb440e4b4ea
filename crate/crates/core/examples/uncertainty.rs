//! Monte Carlo Arithmetic on pool -> unpool over a constant background:
//! standard unpooling loses every bit there, the conservative variant does not.
//!
//! cargo run --example uncertainty -- [out_dir]

use nanskip::bench::{brain_like, BrainLike};
use nanskip::network::{zoo, Mode};
use nanskip::uncertainty::{mca_run, McaConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from);
    let x = brain_like(&BrainLike {
        side: 32,
        background: 0.25,
        ..BrainLike::default()
    })?;
    let cfg = McaConfig {
        iterations: 10,
        ..McaConfig::default()
    };
    let background = |i: usize| x.data()[i] == 0.25;

    for mode in [Mode::Standard, Mode::Conservative] {
        let report = mca_run(&zoo::pool_unpool(), &x, mode, &cfg)?;
        let map = report.layers.last().unwrap();
        let nan = |i: usize| report.samples.iter().any(|s| s[1].data()[i].is_nan());
        let filled = |i: usize| report.samples.iter().any(|s| s[1].data()[i] != 0.0);
        let bg = (0..x.len()).filter(|&i| background(i)).count();
        let bg_nan = (0..x.len()).filter(|&i| background(i) && nan(i)).count();
        println!("== {mode}");
        println!("input bits {:.2}, output bits {:.2}", report.input.mean(), map.mean());
        println!("background cells emitted as NaN: {bg_nan} of {bg}");
        if let Some(b) = map.mean_where(|i| background(i) && filled(i) && !nan(i)) {
            println!("bits at filled background cells {b:.2}");
        }
        print!("{}", map.to_ascii(0, 0));
        if let Some(dir) = &dir {
            let path = dir.join(format!("bits_{mode}.pgm"));
            std::fs::write(&path, map.to_pgm(0, 0))?;
        }
    }
    Ok(())
}
