mod common;

use common::{batch_loss, finite_difference, l2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twr_har::bound;
use twr_har::nn::{self, MlpModel, TrainConfig};
use twr_har::Matrix;

fn toy_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> (Vec<f64>, Vec<usize>) {
    let x = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = (0..n).map(|_| rng.gen_range(0..k)).collect();
    (x, y)
}

/// Larger weights than the default init so gradients are well above the
/// finite-difference noise floor.
fn toy_model(seed: u64, normalize: bool) -> MlpModel {
    let mut m = MlpModel::with_widths(7, 6, 5, 4, seed);
    for w in &mut m.layers {
        w.scale(20.0);
    }
    m.normalize = normalize;
    m
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for seed in 0..6 {
        for normalize in [false, true] {
            let model = toy_model(seed, normalize);
            let (x, y) = toy_batch(&mut rng, 5, 7, 4);
            let grads = model.backward(&x, &y).unwrap();
            for layer in 0..3 {
                for idx in 0..model.layers[layer].as_slice().len() {
                    let analytic = grads.layers[layer].as_slice()[idx];
                    let numeric = finite_difference(&model, layer, idx, &x, &y, 1e-6);
                    let scale = analytic.abs().max(numeric.abs());
                    if scale < 1e-7 {
                        assert!((analytic - numeric).abs() < 1e-8);
                        continue;
                    }
                    worst = worst.max((analytic - numeric).abs() / scale);
                }
            }
        }
    }
    assert!(worst <= 1e-4, "worst relative gradient error {worst:e}");
}

#[test]
fn sgd_step_decreases_loss_for_small_lr() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let model = toy_model(9, true);
    let (x, y) = toy_batch(&mut rng, 8, 7, 4);
    let before = batch_loss(&model, &x, &y);
    let grads = model.backward(&x, &y).unwrap();
    let mut stepped = model.clone();
    let cfg = TrainConfig {
        lr: 1e-3,
        ..TrainConfig::default()
    };
    nn::sgd_step(&mut stepped, &grads, &cfg).unwrap();
    assert!(batch_loss(&stepped, &x, &y) < before);
}

#[test]
fn output_sensitivity_is_bounded_by_spectral_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for draw in 0..100 {
        let mut model = MlpModel::with_widths(
            rng.gen_range(2..12),
            rng.gen_range(2..10),
            rng.gen_range(2..8),
            rng.gen_range(2..6),
            draw,
        );
        let gain = rng.gen_range(1.0..50.0);
        for w in &mut model.layers {
            w.scale(gain);
        }
        model.normalize = false;
        let d = model.input_dim();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let eps = 10f64.powf(rng.gen_range(-4.0..0.5));
        let dx: Vec<f64> = (0..d).map(|_| eps * rng.gen_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let f0 = model.forward(&x).unwrap();
        let f1 = model.forward(&shifted).unwrap();
        let diff: Vec<f64> = f0.iter().zip(&f1).map(|(a, b)| a - b).collect();
        let lipschitz: f64 = model.layers.iter().map(|w| bound::spectral_norm(w).unwrap()).product();
        // Activation constant C = 1 (leaky slope 0.1 ≤ 1), softmax is 1-Lipschitz.
        assert!(
            l2(&diff) <= lipschitz * l2(&dx) * (1.0 + 1e-9),
            "draw {draw}: {} > {}",
            l2(&diff),
            lipschitz * l2(&dx)
        );
    }
}

#[test]
fn checkpoint_survives_a_training_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let model = toy_model(3, true);
    let (x, y) = toy_batch(&mut rng, 4, 7, 4);
    let grads = model.backward(&x, &y).unwrap();
    let mut trained = model.clone();
    nn::sgd_step(&mut trained, &grads, &TrainConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    trained.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"TWRMLP1\0");
    assert_eq!(&bytes[8..12], &6u32.to_le_bytes());
    assert_eq!(&bytes[12..16], &7u32.to_le_bytes());
    assert_eq!(&bytes[16..24], &trained.layers[0].as_slice()[0].to_le_bytes());
    assert_eq!(bytes.len(), 8 + 3 * 8 + 8 * (6 * 7 + 5 * 6 + 4 * 5));
    assert_eq!(MlpModel::load(&path).unwrap(), trained);
}

proptest! {
    #[test]
    fn clipped_updates_never_exceed_unit_norm(
        rows in 1usize..20, cols in 1usize..20, scale in 1e-3..1e6f64, seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::from_fn(rows, cols, |_, _| scale * rng.gen_range(-1.0..1.0));
        let norm = nn::clip_update(&mut m, 1.0);
        prop_assert!(norm <= 1.0);
        prop_assert!(m.frobenius_norm() <= 1.0);
        prop_assert!(m.frobenius_norm().powi(2) <= 1.0);
    }

    #[test]
    fn probabilities_form_a_distribution(seed in 0u64..500, spread in 0.1..100.0f64) {
        let mut model = MlpModel::with_widths(5, 4, 3, 6, seed);
        for w in &mut model.layers {
            w.scale(spread);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = model.forward(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0 && *v <= 1.0));
        let loss = nn::cross_entropy(&p, 0);
        prop_assert!(loss >= 0.0 && loss <= nn::loss_bound());
    }
}
