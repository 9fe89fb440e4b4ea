//! Max, multi and aggressive pooling on a plane with ties, then both unpools.
//!
//! cargo run --example pooling

use nanskip::pooling::{aggressive_max_pool, conservative_unpool, max_pool, max_unpool, multi_max_pool, PoolConfig};
use nanskip::Tensor4;

fn show(label: &str, t: &Tensor4) {
    let s = t.shape();
    println!("{label}:");
    for h in 0..s.h {
        let row: Vec<String> = (0..s.w).map(|w| format!("{:5.1}", t.get(0, 0, h, w))).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> nanskip::Result<()> {
    #[rustfmt::skip]
    let x = Tensor4::from_parts((1, 1, 4, 4), vec![
        1.0, 1.0,   2.0, 0.5,
        1.0, 0.0,   f32::NAN, 0.5,
        3.0, 3.0,   f32::NAN, f32::NAN,
        3.0, 3.0,   f32::NAN, f32::NAN,
    ])?;
    show("input", &x);
    let cfg = PoolConfig::new(2, 2);

    let single = max_pool(&x, &cfg)?;
    show("max_pool", &single.values);
    println!("indices {:?}", single.single().unwrap());
    show(
        "max_unpool",
        &max_unpool(&single.values, single.single().unwrap(), x.shape())?,
    );

    let multi = multi_max_pool(&x, &cfg)?;
    let sets = multi.sets().unwrap();
    println!("tie sets {:?}", sets.iter().collect::<Vec<_>>());
    show(
        "conservative_unpool",
        &conservative_unpool(&multi.values, sets, x.shape())?,
    );

    for t1 in [1, 2, 3] {
        let aggr = aggressive_max_pool(&x, &cfg.with_t1(t1))?;
        show(&format!("aggressive t1={t1}"), &aggr.values);
    }
    Ok(())
}
