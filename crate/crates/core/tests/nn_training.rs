mod common;

use common::finite_difference;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twr_har::nn::{self, Dataset, MlpModel, Split, SplitKind, TrainConfig, N_CLASSES};
use twr_har::Matrix;

/// Two classes split by a random hyperplane with a margin.
fn separable(n: usize, d: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    while labels.len() < n {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let side: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum();
        if side.abs() < 0.2 {
            continue;
        }
        labels.push(usize::from(side > 0.0));
        rows.extend(x);
    }
    Split::new(Matrix::from_vec(n, d, rows).unwrap(), labels, 1.8).unwrap()
}

fn random_split(n: usize, d: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Matrix::from_fn(n, d, |_, _| rng.gen_range(0.0..1.0));
    let labels = (0..n).map(|_| rng.gen_range(0..N_CLASSES)).collect();
    Split::new(features, labels, 1.8).unwrap()
}

fn dataset_of(train: Split) -> Dataset {
    Dataset {
        val: train.clone(),
        test1: train.clone(),
        test2: train.clone(),
        train,
    }
}

#[test]
fn separable_toy_is_learned() {
    let data = dataset_of(separable(640, 16, 1));
    let (_, trace) = nn::train(&MlpModel::init(16, 2), &data, &TrainConfig::default()).unwrap();
    let acc = trace.final_of(SplitKind::Train).accuracy;
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn gradients_stay_exact_during_training() {
    let mut split = random_split(96, 7, 3);
    split.labels.iter_mut().for_each(|l| *l %= 4);
    let data = dataset_of(split);
    let mut model = MlpModel::with_widths(7, 6, 5, 4, 4);
    for w in &mut model.layers {
        w.scale(20.0);
    }
    let x = data.train.features.as_slice()[..8 * 7].to_vec();
    let y = data.train.labels[..8].to_vec();
    let cfg = TrainConfig {
        epochs: 1,
        batch: 8,
        lr: 0.05,
        ..TrainConfig::default()
    };
    for checkpoint in 0..3 {
        let grads = model.backward(&x, &y).unwrap();
        for layer in 0..3 {
            for idx in 0..model.layers[layer].as_slice().len() {
                let analytic = grads.layers[layer].as_slice()[idx];
                let numeric = finite_difference(&model, layer, idx, &x, &y, 1e-6);
                let scale = analytic.abs().max(numeric.abs());
                if scale > 1e-7 {
                    assert!((analytic - numeric).abs() / scale <= 1e-4, "checkpoint {checkpoint}");
                }
            }
        }
        model = nn::train(&model, &data, &TrainConfig { seed: checkpoint, ..cfg }).unwrap().0;
    }
}

#[test]
fn saturated_correct_predictions_have_zero_gradient() {
    let mut model = MlpModel::with_widths(5, 4, 3, N_CLASSES, 7);
    model.layers[2].scale(1e6);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..4 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let probs = model.forward_batch(&x, 4).unwrap();
    let y: Vec<usize> = probs
        .chunks(N_CLASSES)
        .map(|p| p.iter().position(|v| *v == 1.0).expect("saturated output"))
        .collect();
    assert_eq!(model.batch_metrics(&x, &y).unwrap().loss, 0.0);
    let grads = model.backward(&x, &y).unwrap();
    assert!(grads.layers.iter().all(|g| g.as_slice().iter().all(|v| *v == 0.0)));
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    let data = dataset_of(random_split(100, 9, 9));
    let model = MlpModel::init(9, 10);
    let cfg = TrainConfig {
        lr: 0.0,
        epochs: 3,
        ..TrainConfig::default()
    };
    let (trained, trace) = nn::train(&model, &data, &cfg).unwrap();
    assert_eq!(trained, model);
    assert!(trace.step_norms.iter().flatten().all(|n| *n == 0.0));
}

#[test]
fn same_seed_same_trace() {
    let data = dataset_of(random_split(150, 9, 11));
    let cfg = TrainConfig {
        epochs: 4,
        seed: 12,
        ..TrainConfig::default()
    };
    let a = nn::train(&MlpModel::init(9, 12), &data, &cfg).unwrap();
    let b = nn::train(&MlpModel::init(9, 12), &data, &cfg).unwrap();
    assert_eq!(a, b);
    let c = nn::train(&MlpModel::init(9, 12), &data, &TrainConfig { seed: 13, ..cfg }).unwrap();
    assert_ne!(a.1, c.1);
    // Evaluations every 10 steps plus the final step.
    let steps: Vec<usize> = a.1.evals.iter().map(|e| e.step).collect();
    assert_eq!(steps, vec![10, 20]);
    assert_eq!(a.1.n_rounds, 20);
}

#[test]
fn uniform_output_is_at_chance() {
    let split = random_split(1200, 6, 14);
    let mut model = MlpModel::with_widths(6, 8, 8, N_CLASSES, 15);
    model.layers[2] = Matrix::zeros(N_CLASSES, 8);
    let m = nn::evaluate(&model, &split).unwrap();
    assert!((m.loss - (N_CLASSES as f64).ln()).abs() < 1e-12);
    let p = 1.0 / N_CLASSES as f64;
    let sigma = (p * (1.0 - p) / 1200.0).sqrt();
    assert!((m.accuracy - p).abs() <= 3.0 * sigma, "{}", m.accuracy);
}

#[test]
fn empty_splits_are_rejected() {
    let empty = Split::new(Matrix::zeros(0, 6), vec![], 1.7).unwrap();
    let model = MlpModel::init(6, 0);
    assert!(nn::evaluate(&model, &empty).is_err());
    let data = Dataset {
        test1: empty,
        ..dataset_of(random_split(24, 6, 16))
    };
    let err = nn::train(&model, &data, &TrainConfig::default()).unwrap_err();
    assert!(err.to_string().contains("test1"), "{err}");
    assert!(Split::new(Matrix::zeros(2, 6), vec![0], 1.8).is_err());
    assert!(Split::new(Matrix::zeros(1, 6), vec![N_CLASSES], 1.8).is_err());
    let narrow = MlpModel::with_widths(6, 4, 4, 3, 0);
    let split = random_split(40, 6, 17);
    assert!(nn::evaluate(&narrow, &split).is_err());
}
