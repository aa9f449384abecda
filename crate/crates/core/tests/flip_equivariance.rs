//! Flip-equivariance oracle tying augmentation, the network, and the loss
//! together.
//!
//! For convolution under symmetric zero padding, mirroring an input axis and
//! mirroring the matching kernel axis mirrors the output exactly; pooling,
//! rectification, corner-aligned resize, and softmax all commute with
//! mirroring too. So for a model in which every feature path either carries
//! the flipped axis or is constant along it, flipping the inputs *and* the
//! kernels must flip the predicted probability planes — and the training
//! loss against the correspondingly flipped mask must not change.
//!
//! This holds only if the flip helpers touch exactly the planes that share
//! the flipped physical axis; a flip applied to the wrong axis or the wrong
//! view breaks the identity immediately, which is the bug class this test
//! exists to catch. Views whose planes do not contain the flipped axis are
//! neutralized (their encoder weights zeroed) because their features land in
//! the shared latent stack, where anything that is not constant along the
//! flipped axis would have to mirror and cannot.

use radarseg4d::augment::{flip_azimuth, flip_elevation};
use radarseg4d::config::{BinConfig, FovConfig, PerView};
use radarseg4d::dataset::WindowSample;
use radarseg4d::grid::{Grid, Mask};
use radarseg4d::loss::{combined_loss, LossParams, OneHotMask};
use radarseg4d::network::{window_input, Model, NetworkConfig, Tensor};
use radarseg4d::projection::ViewSpecs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_specs() -> ViewSpecs {
    let bins = BinConfig {
        elevation: 8,
        azimuth: 8,
        range: 8,
        doppler: 8,
        coarse_elevation: 4,
        coarse_azimuth: 4,
    };
    ViewSpecs::new(&FovConfig::default(), &bins).expect("tiny views must validate")
}

fn random_sample(specs: &ViewSpecs, window: usize, seed: u64) -> WindowSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = specs.mask_dims();
    WindowSample {
        frame_id: "equivariance".to_string(),
        views: PerView::from_fn(|view| {
            let spec = specs.get(view);
            (0..window)
                .map(|_| {
                    let data =
                        (0..spec.rows * spec.cols).map(|_| rng.random::<f32>()).collect();
                    Grid::from_vec(spec.rows, spec.cols, data)
                })
                .collect()
        }),
        mask: Mask::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(0..2)).collect(),
        ),
    }
}

/// Zero the encoder and pyramid weights of the named views so their latent
/// contribution is a constant plane (invariant under any flip).
fn neutralize_views(model: &mut Model<f64>, views: &[&str]) {
    model.params_mut().for_each_mut(|def, values| {
        let neutralized = views.iter().any(|v| {
            def.name.starts_with(&format!("encoder.{v}."))
                || def.name.starts_with(&format!("pyramid.{v}."))
        });
        if neutralized && def.name.ends_with(".weight") {
            values.fill(0.0);
        }
    });
}

/// Reverse the trailing (horizontal) kernel axis.
fn mirror_last_axis(shape: &[usize], values: &mut [f64]) {
    let k = *shape.last().unwrap();
    for chunk in values.chunks_mut(k) {
        chunk.reverse();
    }
}

/// Reverse the second-to-last (vertical) kernel axis.
fn mirror_second_last_axis(shape: &[usize], values: &mut [f64]) {
    let kx = shape[shape.len() - 1];
    let ky = shape[shape.len() - 2];
    for block in values.chunks_mut(ky * kx) {
        for r in 0..ky / 2 {
            let (head, tail) = block.split_at_mut((ky - 1 - r) * kx);
            head[r * kx..(r + 1) * kx].swap_with_slice(&mut tail[..kx]);
        }
    }
}

/// Mirror every kernel whose named axis is flipped: the per-view weights of
/// `views` plus all decoder weights (the decoder's plane inherits both the
/// elevation and the azimuth axis from the annotated view).
fn mirror_kernels(model: &mut Model<f64>, views: &[&str], horizontal: bool) {
    model.params_mut().for_each_mut(|def, values| {
        if !def.name.ends_with(".weight") {
            return;
        }
        let affected = def.name.starts_with("decoder.")
            || views.iter().any(|v| {
                def.name.starts_with(&format!("encoder.{v}."))
                    || def.name.starts_with(&format!("pyramid.{v}."))
            });
        if !affected {
            return;
        }
        if horizontal {
            mirror_last_axis(&def.shape, values);
        } else {
            mirror_second_last_axis(&def.shape, values);
        }
    });
}

/// Flip class-probability planes `[k, rows, cols]` along the given axes.
fn flip_planes(probs: &Tensor<f64>, cols_axis: bool, rows_axis: bool) -> Tensor<f64> {
    let (rows, cols) = (probs.shape()[1], probs.shape()[2]);
    let mut flipped = probs.clone();
    for plane in flipped.data_mut().chunks_mut(rows * cols) {
        if cols_axis {
            for row in plane.chunks_mut(cols) {
                row.reverse();
            }
        }
        if rows_axis {
            for r in 0..rows / 2 {
                let (head, tail) = plane.split_at_mut((rows - 1 - r) * cols);
                head[r * cols..(r + 1) * cols].swap_with_slice(&mut tail[..cols]);
            }
        }
    }
    flipped
}

fn check_equivariance(flip_az: bool, flip_el: bool, seed: u64) {
    let specs = tiny_specs();
    let config = NetworkConfig::tiny();
    let window = config.window;
    let mut model = Model::<f64>::new(config, &specs, seed).expect("tiny config validates");

    let mut neutral: Vec<&str> = Vec::new();
    if flip_az {
        neutral.extend(["er", "ed"]);
    }
    if flip_el {
        neutral.extend(["ra", "da"]);
    }
    neutralize_views(&mut model, &neutral);

    let sample = random_sample(&specs, window, seed ^ 0x51);
    let probs = model
        .forward(&window_input::<f64>(&sample))
        .expect("forward succeeds")
        .probs;

    let mut flipped_sample = sample.clone();
    if flip_az {
        flip_azimuth(&mut flipped_sample);
        mirror_kernels(&mut model, &["ea", "ra", "da"], true);
    }
    if flip_el {
        flip_elevation(&mut flipped_sample);
        mirror_kernels(&mut model, &["ea", "er", "ed"], false);
    }

    let flipped_probs = model
        .forward(&window_input::<f64>(&flipped_sample))
        .expect("forward succeeds")
        .probs;

    let expected = flip_planes(&probs, flip_az, flip_el);
    let worst = expected
        .data()
        .iter()
        .zip(flipped_probs.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        worst < 1e-9,
        "probabilities must mirror exactly (az {flip_az}, el {flip_el}): worst |diff| {worst:e}"
    );

    // The loss of the mirrored prediction against the mirrored mask equals
    // the original loss: per-pixel terms are only permuted.
    let params = LossParams::with_class_weights(vec![0.4, 1.6]);
    let base = combined_loss(&probs, &OneHotMask::from_mask(&sample.mask, 2), &params)
        .expect("loss evaluates")
        .total;
    let mirrored = combined_loss(
        &flipped_probs,
        &OneHotMask::from_mask(&flipped_sample.mask, 2),
        &params,
    )
    .expect("loss evaluates")
    .total;
    assert!(
        (base - mirrored).abs() < 1e-5,
        "loss must be flip-invariant (az {flip_az}, el {flip_el}): {base} vs {mirrored}"
    );
}

#[test]
fn azimuth_flip_mirrors_prediction_and_preserves_loss() {
    check_equivariance(true, false, 101);
}

#[test]
fn elevation_flip_mirrors_prediction_and_preserves_loss() {
    check_equivariance(false, true, 202);
}

#[test]
fn combined_flips_mirror_prediction_and_preserve_loss() {
    check_equivariance(true, true, 303);
}

/// Sanity check on the oracle itself: flipping inputs *without* mirroring
/// the kernels must break the identity — otherwise the test above would
/// pass vacuously.
#[test]
fn equivariance_fails_without_mirrored_kernels() {
    let specs = tiny_specs();
    let config = NetworkConfig::tiny();
    let window = config.window;
    let mut model = Model::<f64>::new(config, &specs, 404).expect("tiny config validates");
    neutralize_views(&mut model, &["er", "ed"]);

    let sample = random_sample(&specs, window, 405);
    let probs = model
        .forward(&window_input::<f64>(&sample))
        .expect("forward succeeds")
        .probs;

    let mut flipped_sample = sample.clone();
    flip_azimuth(&mut flipped_sample);
    let flipped_probs = model
        .forward(&window_input::<f64>(&flipped_sample))
        .expect("forward succeeds")
        .probs;

    let expected = flip_planes(&probs, true, false);
    let worst = expected
        .data()
        .iter()
        .zip(flipped_probs.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        worst > 1e-6,
        "oracle has no power: unmirrored kernels still looked equivariant"
    );
}
