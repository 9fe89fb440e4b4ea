//! Desk-scale networks with seeded random weights.

use crate::network::{GraphBuilder, LayerGraph};
use crate::rng::Rng;
use crate::tensor::{Kernel4, Shape4};

/// He-uniform weights `U(-b, b)`, `b = sqrt(6 / fan_in)`, drawn from `seed`.
/// With `bias`, biases are `U(-0.1 b, 0.1 b)`; otherwise there is no bias.
pub fn random_kernel(shape: Shape4, seed: u64, bias: bool) -> Kernel4 {
    let mut rng = Rng::new(seed);
    let fan_in = (shape.c * shape.h * shape.w).max(1) as f64;
    let bound = (6.0 / fan_in).sqrt();
    let data = (0..shape.numel()).map(|_| rng.uniform(-bound, bound) as f32).collect();
    let bias = bias.then(|| {
        (0..shape.n)
            .map(|_| rng.uniform(-0.1 * bound, 0.1 * bound) as f32)
            .collect()
    });
    Kernel4::new(shape, data, bias).expect("random kernel is well-formed")
}

/// `conv -> pool -> conv -> unpool -> conv`, all 3x3 "same" convolutions.
///
/// The encoder widens `in_channels` to `features`, the bottleneck keeps the
/// width, the decoder maps back to one channel. Layer names: `enc`, `pool`,
/// `mid`, `dec`.
pub fn toy_unet(in_channels: usize, features: usize, seed: u64) -> LayerGraph {
    GraphBuilder::new()
        .conv(
            "enc",
            random_kernel(Shape4::new(features, in_channels, 3, 3), seed, true),
            1,
            1,
        )
        .max_pool("pool", 2, 2)
        .conv(
            "mid",
            random_kernel(Shape4::new(features, features, 3, 3), seed + 1, true),
            1,
            1,
        )
        .max_unpool("pool")
        .conv(
            "dec",
            random_kernel(Shape4::new(1, features, 3, 3), seed + 2, true),
            1,
            1,
        )
        .build()
        .expect("toy U-Net is well-formed")
}

/// Two-level U-Net: `enc1 pool1 enc2 pool2 mid unpool2 dec2 unpool1 dec1 out`.
pub fn two_level_unet(in_channels: usize, features: usize, seed: u64) -> LayerGraph {
    let f = features;
    GraphBuilder::new()
        .conv(
            "enc1",
            random_kernel(Shape4::new(f, in_channels, 3, 3), seed, true),
            1,
            1,
        )
        .max_pool("pool1", 2, 2)
        .conv("enc2", random_kernel(Shape4::new(f, f, 3, 3), seed + 1, true), 1, 1)
        .max_pool("pool2", 2, 2)
        .conv("mid", random_kernel(Shape4::new(f, f, 3, 3), seed + 2, true), 1, 1)
        .max_unpool("pool2")
        .conv("dec2", random_kernel(Shape4::new(f, f, 3, 3), seed + 3, true), 1, 1)
        .max_unpool("pool1")
        .conv("dec1", random_kernel(Shape4::new(f, f, 3, 3), seed + 4, true), 1, 1)
        .conv("out", random_kernel(Shape4::new(1, f, 1, 1), seed + 5, true), 1, 0)
        .build()
        .expect("two-level U-Net is well-formed")
}

/// `max_pool -> max_unpool` with a 2x2 window; the instability probe.
pub fn pool_unpool() -> LayerGraph {
    GraphBuilder::new()
        .max_pool("pool", 2, 2)
        .max_unpool("pool")
        .build()
        .expect("pool/unpool is well-formed")
}

/// Small classifier for `(N, in_channels, side, side)` images, `side` divisible by 4:
/// `conv relu pool conv relu pool nan_to_zero flatten dense`.
pub fn toy_classifier(in_channels: usize, side: usize, classes: usize, seed: u64) -> LayerGraph {
    let flat = 8 * (side / 4) * (side / 4);
    GraphBuilder::new()
        .conv(
            "conv1",
            random_kernel(Shape4::new(4, in_channels, 3, 3), seed, true),
            1,
            1,
        )
        .relu()
        .max_pool("pool1", 2, 2)
        .conv("conv2", random_kernel(Shape4::new(8, 4, 3, 3), seed + 1, true), 1, 1)
        .relu()
        .max_pool("pool2", 2, 2)
        .nan_to_zero()
        .flatten()
        .dense("fc", random_kernel(Shape4::new(classes, flat, 1, 1), seed + 2, true))
        .build()
        .expect("toy classifier is well-formed")
}
