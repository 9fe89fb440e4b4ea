mod common;

use common::*;
use nanskip::bench::{brain_like, run_threshold_sweep, BrainLike};
use nanskip::convolution::{count_skips, ConvConfig};
use nanskip::network::{
    argmax, forward, forward_with, load_graph, nan_to_zero, save_graph, zoo, ForwardOptions, GraphBuilder,
    InstrumentationReport, LayerKind, Mode,
};
use nanskip::{Error, Rng, Shape4, Tensor4};

#[test]
fn all_nan_input_skips_every_window() {
    let graph = GraphBuilder::new()
        .nan_conv("c", zoo::random_kernel(Shape4::new(2, 1, 3, 3), 1, true), 1, 0)
        .build()
        .unwrap();
    let x = Tensor4::filled((1, 1, 8, 8), f32::NAN);
    assert!(matches!(
        forward(&graph, &x, Mode::Standard),
        Err(Error::Graph { layer: 0, .. })
    ));
    let (y, report) = forward(&graph, &x, Mode::Conservative).unwrap();
    assert!(y.data().iter().all(|v| v.is_nan()));
    assert_eq!(report.aggregate_skip_ratio(), 1.0);
}

#[test]
fn zero_padding_dilutes_border_windows() {
    let graph = GraphBuilder::new()
        .nan_conv("c", zoo::random_kernel(Shape4::new(1, 1, 3, 3), 1, true), 1, 1)
        .build()
        .unwrap();
    let (y, report) = forward(&graph, &Tensor4::filled((1, 1, 8, 8), f32::NAN), Mode::Conservative).unwrap();
    // corners see 4 NaNs out of 9 (r < 0.5), edges 6 of 9, the interior 9 of 9
    assert_eq!(report.layers[0].skipped, 64 - 4);
    assert!(!y.get(0, 0, 0, 0).is_nan());
    assert!(y.get(0, 0, 0, 1).is_nan());
}

#[test]
fn constant_background_skips_counted_from_intermediates() {
    let x = brain_like(&BrainLike {
        side: 32,
        foreground: 0.3,
        background: 0.0,
        seed: 3,
    })
    .unwrap();
    let graph = unet(3);
    let out = forward_with(&graph, &x, &ForwardOptions::new(Mode::Conservative).recording()).unwrap();
    let dec = &out.report.layers[4];
    assert_eq!(dec.kind, LayerKind::Conv);
    assert!(dec.skipped > 0);

    let k = graph.weight("dec").unwrap();
    let oracle = count_skips(&out.intermediates[3], k, &ConvConfig::new(1, 1)).unwrap();
    assert_eq!((dec.skipped, dec.total), oracle);

    // skipped windows sit in the background: the output there is NaN
    let bg_nan = (0..32 * 32)
        .filter(|&i| x.data()[i] == 0.0 && out.output.data()[i].is_nan())
        .count();
    let fg_nan = (0..32 * 32)
        .filter(|&i| x.data()[i] != 0.0 && out.output.data()[i].is_nan())
        .count();
    assert!(bg_nan > 10 * fg_nan.max(1), "background {bg_nan}, foreground {fg_nan}");
}

#[test]
fn decoder_skips_more_than_encoder() {
    let x = brain_like(&BrainLike::default()).unwrap();
    let res = run_threshold_sweep(&zoo::toy_unet(1, 8, 0), &x, &[0.5], Mode::Conservative).unwrap();
    let enc = res.rows.iter().find(|r| r.name.as_deref() == Some("enc")).unwrap();
    let dec = res.rows.iter().find(|r| r.name.as_deref() == Some("dec")).unwrap();
    assert!(dec.ratio() > enc.ratio());
}

#[test]
fn saved_graph_runs_identically() {
    let dir = tempfile::tempdir().unwrap();
    let graph = zoo::two_level_unet(2, 4, 11);
    let path = save_graph(&graph, dir.path(), "net").unwrap();
    let loaded = load_graph(&path).unwrap();
    let x = random_tensor(Shape4::new(1, 2, 16, 16), &mut Rng::new(4));
    for mode in [Mode::Standard, Mode::Conservative, Mode::Aggressive] {
        let (a, _) = forward(&graph, &x, mode).unwrap();
        let (b, _) = forward(&loaded, &x, mode).unwrap();
        assert!(a.bit_eq(&b), "{mode}");
    }
}

#[test]
fn shape_errors_precede_execution() {
    let graph = unet(0);
    let err = forward(&graph, &Tensor4::zeros((1, 2, 8, 8)), Mode::Standard).unwrap_err();
    assert!(matches!(err, Error::Graph { .. } | Error::Shape(_)), "{err}");
}

#[test]
fn classifier_handles_nan_input() {
    let graph = zoo::toy_classifier(1, 16, 5, 2);
    let mut rng = Rng::new(6);
    let x = with_random_nans(&random_tensor(Shape4::new(3, 1, 16, 16), &mut rng), 0.2, &mut rng);
    let (logits, report) = forward(&graph, &x, Mode::Aggressive).unwrap();
    assert_eq!(logits.shape().dims(), [3, 5, 1, 1]);
    assert!(!logits.has_nan());
    assert_eq!(argmax(&logits).len(), 3);
    assert_eq!(report.layers.len(), graph.layers().len());
}

#[test]
fn nan_to_zero_examples() {
    let x = Tensor4::from_parts((1, 1, 1, 2), vec![f32::NAN, 1.0]).unwrap();
    assert_eq!(nan_to_zero(&x).data(), &[0.0, 1.0]);
    let clean = Tensor4::from_parts((1, 1, 1, 3), vec![-1.0, 0.5, 2.0]).unwrap();
    assert!(nan_to_zero(&clean).bit_eq(&clean));
    assert!(nan_to_zero(&Tensor4::filled((1, 1, 2, 2), f32::NAN))
        .data()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn report_serializations() {
    let x = brain_like(&BrainLike {
        side: 16,
        ..BrainLike::default()
    })
    .unwrap();
    let (_, report) = forward(&unet(1), &x, Mode::Conservative).unwrap();
    let csv = report.to_csv();
    assert_eq!(csv.lines().next().unwrap(), InstrumentationReport::CSV_HEADER);
    assert_eq!(csv.lines().count(), 6);
    let back: InstrumentationReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
    for l in &report.layers {
        assert!(l.skipped <= l.total);
    }
}

#[test]
fn per_layer_override_beats_global() {
    let dir = tempfile::tempdir().unwrap();
    nanskip::io::save_npy(&Tensor4::filled((1, 1, 3, 3), 1.0), dir.path().join("k.npy")).unwrap();
    let text = "nanskip-graph v1\nglobal t2=1.0\nweight name=k file=k.npy\nnan_conv name=c weight=k pad=1 t2=0.1\n";
    let graph = nanskip::network::parse_graph(text, dir.path()).unwrap();
    let mut x = vec![1.0f32; 25];
    x[12] = f32::NAN;
    let (_, report) = forward(
        &graph,
        &Tensor4::from_parts((1, 1, 5, 5), x).unwrap(),
        Mode::Conservative,
    )
    .unwrap();
    // every window touching the centre has r = 1/9 >= 0.1
    assert_eq!(report.layers[0].skipped, 9);
}
