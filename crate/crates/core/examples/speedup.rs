//! Standard vs NaN-skipping convolution time across NaN densities.
//!
//! cargo run --release --example speedup -- [side] [random|block]

use nanskip::bench::{run_speedup_trials, trials_to_csv, Placement, TrialConfig};

fn main() -> nanskip::Result<()> {
    let mut args = std::env::args().skip(1);
    let side = args
        .next()
        .map_or(Ok(512), |s| s.parse())
        .expect("side must be an integer");
    let placement: Placement = args.next().as_deref().unwrap_or("block").parse()?;

    let cfg = TrialConfig {
        sizes: vec![side],
        placement,
        reps: 7,
        warmup: 2,
        threads: 1,
        ..TrialConfig::default()
    };
    let results = run_speedup_trials(&cfg)?;
    print!("{}", trials_to_csv(&results, cfg.seed, 1));
    for r in &results {
        println!(
            "density {:.2}: skip ratio {:.3}, speedup {:.2}x",
            r.density,
            r.skip_ratio(),
            r.speedup()
        );
    }
    Ok(())
}
