mod common;

use common::{geb_oracle, jacobi_singular_values, rel_err};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twr_har::bound::{self, BoundParams};
use twr_har::Matrix;

fn random_params(rng: &mut ChaCha8Rng) -> BoundParams {
    let fro_norms = [rng.gen_range(0.3..5.0), rng.gen_range(0.3..5.0), rng.gen_range(0.3..5.0)];
    let lambdas = [
        rng.gen_range(0.05..1.0) * fro_norms[0],
        rng.gen_range(0.05..1.0) * fro_norms[1],
        rng.gen_range(0.05..1.0) * fro_norms[2],
    ];
    BoundParams {
        b: rng.gen_range(1.0..20.0),
        m: rng.gen_range(10..5000) as f64,
        lp: rng.gen_range(0.5..2.0),
        h: rng.gen_range(2..20) as f64,
        c: rng.gen_range(0.5..2.0),
        alpha: rng.gen_range(0.01..1.0),
        beta_act: rng.gen_range(0.5..2.0),
        delta: rng.gen_range(0.01..0.5),
        n: rng.gen_range(0..2000) as f64,
        lambdas,
        kappa: rng.gen_range(1.0..1000.0),
        fro_norms,
        omega: rng.gen_range(10..10_000) as f64,
    }
}

#[test]
fn geb_matches_fixed_point_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let got = bound::geb(&p).unwrap();
        let want = geb_oracle(&p);
        worst = worst.max(rel_err(got, want));
    }
    assert!(worst <= 1e-9, "worst relative error {worst:e}");
}

#[test]
fn oracle_agrees_on_hand_example() {
    let p = BoundParams {
        b: 1.0,
        m: 1.0,
        lp: 1.0,
        h: 1.0,
        c: 1.0,
        alpha: 1.0,
        beta_act: 1.0,
        delta: 0.5,
        n: 0.0,
        lambdas: [1.0; 3],
        kappa: 1.0,
        fro_norms: [1.0; 3],
        omega: 1.0,
    };
    assert!((geb_oracle(&p) - 13f64.sqrt()).abs() < 1e-14);
}

#[test]
fn zero_rounds_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let p = BoundParams {
            n: 0.0,
            ..random_params(&mut rng)
        };
        let data: f64 = p.c.powi(3) * p.lambdas.iter().product::<f64>();
        let want = ((p.b * p.b + 12.0 * p.b * p.m * p.lp * p.h.sqrt() * data) / (2.0 * p.m * p.delta)).sqrt();
        assert!(rel_err(bound::geb(&p).unwrap(), want) <= 1e-12);
    }
}

#[test]
fn zero_loss_lipschitz_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let p = BoundParams {
            lp: 0.0,
            ..random_params(&mut rng)
        };
        let want = p.b / (2.0 * p.m * p.delta).sqrt();
        assert!(rel_err(bound::geb(&p).unwrap(), want) <= 1e-12);
    }
}

#[test]
fn spectral_quantities_match_jacobi_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let rows = rng.gen_range(1..=64);
        let cols = rng.gen_range(1..=64);
        let a = Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
        let sv = jacobi_singular_values(&a);
        let lambda = bound::spectral_norm(&a).unwrap();
        assert!(rel_err(lambda, sv[0]) <= 1e-6, "{rows}x{cols}: {lambda} vs {}", sv[0]);
        let min = sv.iter().copied().filter(|s| *s > 1e-12 * sv[0]).fold(f64::INFINITY, f64::min);
        let kappa = bound::condition_bound(&a).unwrap();
        assert!(rel_err(kappa, sv[0] / min) <= 1e-6, "{rows}x{cols}: {kappa} vs {}", sv[0] / min);
    }
}

#[test]
fn spectral_norm_is_scale_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = Matrix::from_fn(20, 30, |_, _| rng.gen_range(-1.0..1.0));
    let mut b = a.clone();
    b.scale(-3.0);
    let la = bound::spectral_norm(&a).unwrap();
    assert!(rel_err(bound::spectral_norm(&b).unwrap(), 3.0 * la) < 1e-9);
    assert!(rel_err(bound::spectral_norm(&a.transpose()).unwrap(), la) < 1e-9);
    assert!(la <= a.frobenius_norm());
}

fn base() -> BoundParams {
    BoundParams {
        b: 16.0,
        m: 1200.0,
        lp: 2f64.sqrt(),
        h: 12.0,
        c: 1.0,
        alpha: 0.1,
        beta_act: 1.0,
        delta: 0.05,
        n: 760.0,
        lambdas: [0.5, 0.6, 0.7],
        kappa: 10.0,
        fro_norms: [1.0, 1.0, 1.0],
        omega: 256.0,
    }
}

proptest! {
    #[test]
    fn geb_increases_with_rounds(n in 0.0..1e5f64, dn in 1.0..1e4f64) {
        let p = BoundParams { n, ..base() };
        let q = BoundParams { n: n + dn, ..base() };
        prop_assert!(bound::geb(&q).unwrap() > bound::geb(&p).unwrap());
    }

    #[test]
    fn geb_increases_with_width_and_conditioning(w in 1.0..1e5f64, k in 1.0..1e4f64, f in 1.01..10.0f64) {
        let p = BoundParams { omega: w, kappa: k, ..base() };
        prop_assert!(bound::geb(&p.with_omega(w * f)).unwrap() > bound::geb(&p).unwrap());
        let q = BoundParams { kappa: k * f, ..p };
        prop_assert!(bound::geb(&q).unwrap() > bound::geb(&p).unwrap());
    }

    #[test]
    fn geb_decreases_with_delta(d in 0.001..0.9f64) {
        let p = BoundParams { delta: d, ..base() };
        let q = BoundParams { delta: d * 1.1, ..base() };
        prop_assert!(bound::geb(&q).unwrap() < bound::geb(&p).unwrap());
    }

    #[test]
    fn geb_increases_with_spectral_norm(l in 0.01..0.9f64) {
        // N = 0 isolates the data term, which the weight term otherwise swamps.
        let p = BoundParams { lambdas: [l, 0.6, 0.7], n: 0.0, ..base() };
        let q = BoundParams { lambdas: [l + 0.05, 0.6, 0.7], ..p };
        prop_assert!(bound::geb(&q).unwrap() > bound::geb(&p).unwrap());
    }

    #[test]
    fn narrower_model_never_has_larger_bound(w in 2.0..1e5f64, r in 0.01..0.99f64) {
        let full = BoundParams { omega: w, ..base() };
        let reduced = full.with_omega(w * r);
        prop_assert!(bound::geb_improved(&reduced).unwrap() < bound::geb(&full).unwrap());
        let cmp = bound::proof_condition(&full, &reduced).unwrap();
        prop_assert!(cmp.proof1_holds);
    }
}
