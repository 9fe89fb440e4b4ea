mod common;

use common::*;
use nanskip::bench;
use nanskip::io::load_npy;
use nanskip::network::{zoo, Mode};
use nanskip::uncertainty::{mca_run, perturb, significant_bits, McaConfig};
use nanskip::{Rng, Tensor4};

fn cfg(seed: u64) -> McaConfig {
    McaConfig {
        iterations: 10,
        precision: 24,
        seed,
    }
}

#[test]
fn identity_layer_keeps_nearly_all_bits() {
    let mut rng = Rng::new(1);
    let x = Tensor4::from_fn((1, 1, 12, 12), |_, _, _, _| rng.uniform(0.5, 4.0) as f32);
    let report = mca_run(&identity_graph(), &x, Mode::Standard, &cfg(2)).unwrap();
    let map = &report.layers[0];
    assert!(map.bits().data().iter().all(|&b| b >= 22.0));

    // oracle: two rounds of perturbation applied directly
    let direct: Vec<Tensor4> = (0..10)
        .map(|i| {
            let mut r = Rng::stream(99, i);
            let once = perturb(&x, 24, &mut r);
            perturb(&once, 24, &mut r)
        })
        .collect();
    let oracle = significant_bits(&direct).unwrap();
    assert!(
        (map.mean() - oracle.mean()).abs() < 0.5,
        "{} vs {}",
        map.mean(),
        oracle.mean()
    );
}

#[test]
fn distinct_plane_is_stable_through_pool_unpool() {
    let x = bench::distinct((1, 1, 16, 16), 1.0, 1.0 / 32.0, &mut Rng::new(3));
    let report = mca_run(&zoo::pool_unpool(), &x, Mode::Standard, &cfg(3)).unwrap();
    let out = report.layers.last().unwrap();
    assert!(
        out.bits().data().iter().all(|&b| b >= 22.0),
        "min {:?}",
        out.bits().data().iter().cloned().fold(24.0f32, f32::min)
    );
}

#[test]
fn constant_background_unpool_is_noise() {
    let x = background_with_distinct_square(24, 8, 0.2, 5);
    let report = mca_run(&zoo::pool_unpool(), &x, Mode::Standard, &cfg(5)).unwrap();
    let filled: Vec<bool> = (0..24 * 24)
        .map(|i| report.samples.iter().any(|s| s[1].data()[i] != 0.0))
        .collect();
    let zero_bits = (0..24 * 24)
        .filter(|&i| filled[i] && x.data()[i] == 0.2 && report.layers[1].bits().data()[i] == 0.0)
        .count();
    let bg_filled = (0..24 * 24).filter(|&i| filled[i] && x.data()[i] == 0.2).count();
    assert!(zero_bits * 2 > bg_filled, "{zero_bits} of {bg_filled}");
    let mean = report.layers[1]
        .mean_where(|i| filled[i] && x.data()[i] == 0.2)
        .unwrap();
    assert!(mean < 4.0, "mean {mean}");
}

#[test]
fn conservative_variant_removes_the_instability() {
    let x = background_with_distinct_square(32, 12, 0.25, 7);
    let graph = zoo::pool_unpool();
    let std = mca_run(&graph, &x, Mode::Standard, &cfg(7)).unwrap();
    let cons = mca_run(&graph, &x, Mode::Conservative, &cfg(7)).unwrap();
    let background = |i: usize| x.data()[i] == 0.25;
    let std_bits = std.layers[1].mean_where(background).unwrap();
    let cons_nan = |i: usize| cons.samples.iter().any(|s| s[1].data()[i].is_nan());
    let cons_bits = cons.layers[1]
        .mean_where(|i| background(i) && !cons_nan(i))
        .unwrap_or(24.0);
    assert!(std_bits < cons_bits, "standard {std_bits} vs conservative {cons_bits}");
}

#[test]
fn maps_save_as_npy_and_pgm() {
    let x = background_with_distinct_square(8, 4, 0.5, 1);
    let report = mca_run(&zoo::pool_unpool(), &x, Mode::Standard, &cfg(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bits.npy");
    nanskip::io::save_npy(report.layers[1].bits(), &path).unwrap();
    assert!(load_npy(&path).unwrap().bit_eq(report.layers[1].bits()));
    let pgm = report.layers[1].to_pgm(0, 0);
    assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
    assert_eq!(pgm.len(), "P5\n8 8\n255\n".len() + 64);
    assert_eq!(report.layers[1].to_ascii(0, 0).lines().count(), 8);
}

#[test]
fn invalid_configs_rejected() {
    let x = Tensor4::filled((1, 1, 2, 2), 1.0);
    let bad = McaConfig {
        iterations: 1,
        ..cfg(0)
    };
    assert!(mca_run(&identity_graph(), &x, Mode::Standard, &bad).is_err());
}
