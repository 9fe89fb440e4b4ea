mod common;

use common::*;
use nanskip::bench::{self, dice_labels, psnr};
use nanskip::convolution::{conv2d, count_skips, nan_conv2d, nan_conv2d_with_stats, ConvConfig, Substitution};
use nanskip::io::{read_npy, write_npy};
use nanskip::network::{forward, forward_with, zoo, ForwardOptions, GraphBuilder, Mode};
use nanskip::pooling::{
    aggressive_max_pool, conservative_unpool, max_pool, max_unpool, multi_max_pool, IndexSets, PoolConfig,
};
use nanskip::uncertainty::{perturb, significant_bits};
use nanskip::{Rng, Shape4, Tensor4};
use proptest::prelude::*;

/// Small NCHW shape with planes of at least `min` x `min`.
fn shape(min: usize) -> impl Strategy<Value = Shape4> {
    (1usize..3, 1usize..4, min..min + 9, min..min + 9).prop_map(|(n, c, h, w)| Shape4::new(n, c, h, w))
}

/// Values drawn from a handful of levels so pooling windows often tie.
fn tied_tensor(s: Shape4, seed: u64) -> Tensor4 {
    let mut rng = Rng::new(seed);
    Tensor4::from_fn(s, |_, _, _, _| rng.below(3) as f32 * 0.5)
}

fn conv_case() -> impl Strategy<Value = (Shape4, Geom, usize, u64)> {
    (1usize..4, 1usize..4, 1usize..3, 0usize..2, 1usize..4, any::<u64>()).prop_flat_map(
        |(kh, kw, stride, pad, c_out, seed)| {
            (1usize..3, 1usize..3, kh..kh + 8, kw..kw + 8).prop_map(move |(n, c, h, w)| {
                (
                    Shape4::new(n, c, h, w),
                    Geom {
                        c_in: c,
                        kh,
                        kw,
                        stride,
                        pad,
                    },
                    c_out,
                    seed,
                )
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multi_pool_values_match_max_pool(s in shape(2), seed in any::<u64>(), k in 2usize..4) {
        prop_assume!(s.h >= k && s.w >= k);
        let x = with_random_nans(&tied_tensor(s, seed), 0.2, &mut Rng::new(seed ^ 1));
        let cfg = PoolConfig::new(k, k);
        let single = max_pool(&x, &cfg).unwrap();
        let multi = multi_max_pool(&x, &cfg).unwrap();
        prop_assert!(multi.values.bit_eq(&single.values));
        let sets = multi.sets().unwrap();
        for (cell, &i) in single.single().unwrap().iter().enumerate() {
            let set = sets.get(cell);
            prop_assert!(set.windows(2).all(|w| w[0] < w[1]));
            if !single.values.data()[cell].is_nan() {
                prop_assert!(set.contains(&i));
            }
        }
    }

    #[test]
    fn singleton_sets_unpool_like_max_unpool(s in shape(2), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let x = bench::distinct(s, 0.0, 0.25, &mut rng);
        let cfg = PoolConfig::new(2, 2);
        let p = max_pool(&x, &cfg).unwrap();
        let idx = p.single().unwrap();
        let a = max_unpool(&p.values, idx, p.input_shape).unwrap();
        let b = conservative_unpool(&p.values, &IndexSets::from_single(idx), p.input_shape).unwrap();
        prop_assert!(a.bit_eq(&b));
        let m = multi_max_pool(&x, &cfg).unwrap();
        prop_assert!(m.sets().unwrap().all_singletons());
    }

    #[test]
    fn conservative_unpool_marks_ties(s in shape(2), seed in any::<u64>()) {
        let x = tied_tensor(s, seed);
        let cfg = PoolConfig::new(2, 2);
        let m = multi_max_pool(&x, &cfg).unwrap();
        let sets = m.sets().unwrap();
        let y = conservative_unpool(&m.values, sets, m.input_shape).unwrap();
        let plane = s.h * s.w;
        let (oh, ow) = (s.h / 2, s.w / 2);
        for cell in 0..sets.cells() {
            let base = (cell / (oh * ow)) * plane;
            let set = sets.get(cell);
            for &i in set {
                let v = y.data()[base + i as usize];
                if set.len() > 1 {
                    prop_assert!(v.is_nan());
                } else {
                    prop_assert_eq!(v.to_bits(), m.values.data()[cell].to_bits());
                }
            }
        }
    }

    #[test]
    fn aggressive_nan_iff_tie_count_exceeds_budget(s in shape(2), seed in any::<u64>(), t1 in 1usize..5) {
        let x = tied_tensor(s, seed);
        let cfg = PoolConfig::new(2, 2).with_t1(t1);
        let a = aggressive_max_pool(&x, &cfg).unwrap();
        let (oh, ow) = (s.h / 2, s.w / 2);
        for n in 0..s.n {
            for c in 0..s.c {
                for i in 0..oh {
                    for j in 0..ow {
                        let w: Vec<f32> = (0..4).map(|q| x.get(n, c, 2 * i + q / 2, 2 * j + q % 2)).collect();
                        let max = w.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                        let ties = w.iter().filter(|&&v| (v - max).abs() < cfg.eps).count();
                        prop_assert_eq!(a.values.get(n, c, i, j).is_nan(), ties > t1);
                    }
                }
            }
        }
    }

    #[test]
    fn nan_free_inputs_convolve_identically((s, g, c_out, seed) in conv_case(), t2 in 0.0f64..=1.0) {
        let x = random_tensor(s, &mut Rng::new(seed));
        let k = random_conv_kernel(c_out, g.c_in, g.kh, g.kw, seed);
        let cfg = ConvConfig::new(g.stride, g.pad).with_t2(t2);
        prop_assert!(nan_conv2d(&x, &k, &cfg).unwrap().bit_eq(&conv2d(&x, &k, &cfg).unwrap()));
    }

    #[test]
    fn skipped_positions_match_rescan((s, g, c_out, seed) in conv_case(), p in 0.0f64..1.0, t2 in 0.0f64..=1.0, gaussian in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let x = with_random_nans(&random_tensor(s, &mut rng), p, &mut rng);
        let k = random_conv_kernel(c_out, g.c_in, g.kh, g.kw, seed);
        let sub = if gaussian { Substitution::Gaussian } else { Substitution::Mean };
        let cfg = ConvConfig::new(g.stride, g.pad).with_t2(t2).with_substitution(sub);
        let (y, stats) = nan_conv2d_with_stats(&x, &k, &cfg).unwrap();
        let expected = skip_oracle(&x, &g, t2);
        prop_assert_eq!(nan_positions(&y), expected.clone());
        let skipped = expected.iter().filter(|&&b| b).count() as u64;
        prop_assert_eq!((stats.skipped, stats.total), (skipped, expected.len() as u64));
        prop_assert_eq!(count_skips(&x, &k, &cfg).unwrap(), (skipped, expected.len() as u64));
        prop_assert_eq!(stats.histogram.iter().sum::<u64>(), stats.total);
    }

    #[test]
    fn skip_count_grows_as_threshold_drops((s, g, c_out, seed) in conv_case(), p in 0.0f64..1.0) {
        let mut rng = Rng::new(seed);
        let x = with_random_nans(&random_tensor(s, &mut rng), p, &mut rng);
        let k = random_conv_kernel(c_out, g.c_in, g.kh, g.kw, seed);
        let counts: Vec<u64> = [1.0, 0.8, 0.5, 0.4, 0.0]
            .iter()
            .map(|&t2| count_skips(&x, &k, &ConvConfig::new(g.stride, g.pad).with_t2(t2)).unwrap().0)
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{:?}", counts);
    }

    #[test]
    fn perturbation_stays_within_one_ulp(v in prop::collection::vec(-1e30f32..1e30, 1..64), seed in any::<u64>()) {
        let x = Tensor4::from_parts((1, 1, 1, v.len()), v).unwrap();
        let y = perturb(&x, 24, &mut Rng::new(seed));
        for (&a, &b) in x.data().iter().zip(y.data()) {
            prop_assert!(b == a || b == a.next_up() || b == a.next_down());
            if a != 0.0 {
                // f32 rounding can add at most one ulp on top of the 2^-24 relative bound
                let rel = ((f64::from(b) - f64::from(a)) / f64::from(a)).abs();
                prop_assert!(rel < 2.0f64.powi(-23) + 1e-12);
            }
        }
    }

    #[test]
    fn coarse_perturbation_respects_bound(v in prop::collection::vec(0.1f32..10.0, 1..64), t in 1u32..16, seed in any::<u64>()) {
        let x = Tensor4::from_parts((1, 1, 1, v.len()), v).unwrap();
        let y = perturb(&x, t, &mut Rng::new(seed));
        let bound = (-(t as f64)).exp2();
        for (&a, &b) in x.data().iter().zip(y.data()) {
            let rel = ((f64::from(b) - f64::from(a)) / f64::from(a)).abs();
            // stochastic rounding may land one f32 step outside the exact bound
            prop_assert!(rel <= bound + f64::from(f32::EPSILON));
        }
    }

    #[test]
    fn significant_bits_ignore_sample_order(vals in prop::collection::vec(0.5f32..2.0, 2..12), seed in any::<u64>()) {
        let samples: Vec<Tensor4> = vals.iter().map(|&v| Tensor4::filled((1, 1, 1, 1), v)).collect();
        let mut shuffled = samples.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        let a = significant_bits(&samples).unwrap();
        let b = significant_bits(&shuffled).unwrap();
        prop_assert!((a.bits().data()[0] - b.bits().data()[0]).abs() < 1e-4);
        prop_assert!((0.0..=24.0).contains(&a.bits().data()[0]));
    }

    #[test]
    fn metrics_are_symmetric(a in prop::collection::vec(0i64..4, 1..64), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let b: Vec<i64> = a.iter().map(|&l| if rng.bernoulli(0.3) { rng.below(4) as i64 } else { l }).collect();
        prop_assert_eq!(dice_labels(&a, &b).unwrap(), dice_labels(&b, &a).unwrap());
        let d = dice_labels(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let x = random_tensor(Shape4::new(1, 1, 1, a.len()), &mut rng);
        let y = random_tensor(Shape4::new(1, 1, 1, a.len()), &mut rng);
        prop_assert_eq!(psnr(&x, &y, 2.0).unwrap(), psnr(&y, &x, 2.0).unwrap());
    }

    #[test]
    fn npy_roundtrip_preserves_bits(bits in prop::collection::vec(any::<u32>(), 1..48)) {
        let x = Tensor4::from_parts((1, 1, 1, bits.len()), bits.iter().map(|&b| f32::from_bits(b)).collect()).unwrap();
        let y = read_npy(&write_npy(&x)).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        let same = x.data().iter().zip(y.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn standard_equals_conservative_on_unique_maxima(seed in any::<u64>()) {
        let graph = unet(seed);
        let x = bench::distinct((1, 1, 12, 12), -1.0, 1.0 / 64.0, &mut Rng::new(seed));
        let std = forward_with(&graph, &x, &ForwardOptions::new(Mode::Standard).recording()).unwrap();
        prop_assume!(windows_distinct(&std.intermediates[0], 2, 2, 1e-7));
        let (cons, _) = forward(&graph, &x, Mode::Conservative).unwrap();
        prop_assert!(cons.bit_eq(&std.output));
    }

    #[test]
    fn report_matches_recount(seed in any::<u64>(), p in 0.0f64..0.6) {
        let graph = unet(seed);
        let mut rng = Rng::new(seed);
        let x = with_random_nans(&random_tensor(Shape4::new(1, 1, 12, 12), &mut rng), p, &mut rng);
        let out = forward_with(&graph, &x, &ForwardOptions::new(Mode::Conservative).recording()).unwrap();
        let g = Geom { c_in: 0, kh: 3, kw: 3, stride: 1, pad: 1 };
        for l in out.report.layers.iter().filter(|l| l.nan_aware) {
            let input = if l.index == 0 { &x } else { &out.intermediates[l.index - 1] };
            let oracle = skip_oracle(input, &g, graph.globals().t2);
            prop_assert_eq!(l.total, oracle.len() as u64);
            prop_assert_eq!(l.skipped, oracle.iter().filter(|&&b| b).count() as u64);
        }
    }

    #[test]
    fn aggregate_ratio_monotone_in_threshold(seed in any::<u64>(), p in 0.0f64..0.8) {
        let graph = unet(seed);
        let mut rng = Rng::new(seed);
        let x = with_random_nans(&random_tensor(Shape4::new(1, 1, 16, 16), &mut rng), p, &mut rng);
        let res = bench::run_threshold_sweep(&graph, &x, &[1.0, 0.9, 0.7, 0.5, 0.3, 0.1], Mode::Conservative).unwrap();
        let ratios: Vec<f64> = res.aggregate.iter().map(|a| a.1).collect();
        prop_assert!(ratios.windows(2).all(|w| w[0] <= w[1]), "{:?}", ratios);
    }

    #[test]
    fn aggressive_equals_standard_without_pooling(seed in any::<u64>()) {
        let graph = GraphBuilder::new()
            .conv("a", zoo::random_kernel(Shape4::new(3, 2, 3, 3), seed, true), 1, 1)
            .relu()
            .conv("b", zoo::random_kernel(Shape4::new(2, 3, 1, 1), seed + 1, true), 1, 0)
            .build()
            .unwrap();
        let x = random_tensor(Shape4::new(2, 2, 7, 5), &mut Rng::new(seed));
        let (a, _) = forward(&graph, &x, Mode::Aggressive).unwrap();
        let (s, _) = forward(&graph, &x, Mode::Standard).unwrap();
        prop_assert!(a.bit_eq(&s));
    }
}

#[test]
fn gaussian_substitution_independent_of_thread_count() {
    let mut rng = Rng::new(9);
    let x = with_random_nans(&random_tensor(Shape4::new(2, 2, 24, 24), &mut rng), 0.3, &mut rng);
    let k = random_conv_kernel(3, 2, 3, 3, 9);
    let cfg = ConvConfig::new(1, 1)
        .with_t2(0.8)
        .with_substitution(Substitution::Gaussian)
        .with_seed(17);
    let run = |threads| bench::with_threads(threads, || nan_conv2d(&x, &k, &cfg).unwrap()).unwrap();
    let one = run(1);
    assert!(one.bit_eq(&run(3)));
    assert!(one.bit_eq(&run(8)));
}
