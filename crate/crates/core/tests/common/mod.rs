//! Reference implementations used as test oracles. Deliberately naive and
//! independent of the library code paths they check.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use twr_har::bound::BoundParams;
use twr_har::nn::MlpModel;
use twr_har::Matrix;

/// Direct O(N²) inverse DFT with 1/N scaling.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, v) in x.iter().enumerate() {
                let phase = 2.0 * std::f64::consts::PI * ((m * k) % n) as f64 / n as f64;
                acc += v * Complex64::from_polar(1.0, phase);
            }
            acc / n as f64
        })
        .collect()
}

/// Singular values by one-sided Jacobi rotations, sorted descending.
pub fn jacobi_singular_values(a: &Matrix) -> Vec<f64> {
    // Work on columns of the taller orientation.
    let m = if a.rows() >= a.cols() { a.clone() } else { a.transpose() };
    let (rows, cols) = m.shape();
    let mut u: Vec<Vec<f64>> = (0..cols).map(|c| m.column(c)).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = u[p].iter().map(|x| x * x).sum();
                let beta: f64 = u[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (u[p][i], u[q][i]);
                    u[p][i] = c * x - s * y;
                    u[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = u.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Fixed-point number with `FRAC` fractional bits on a big integer.
#[derive(Clone, Debug)]
pub struct Fixed(BigInt);

const FRAC: u32 = 600;

impl Fixed {
    /// Exact conversion of a finite f64.
    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite());
        if v == 0.0 {
            return Fixed(BigInt::zero());
        }
        let bits = v.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        let shift = e + FRAC as i64;
        assert!(shift >= 0, "value too small for fixed point: {v}");
        Fixed(BigInt::from(sign) * (BigInt::from(mant) << shift as usize))
    }

    pub fn from_int(v: i64) -> Self {
        Fixed(BigInt::from(v) << FRAC as usize)
    }

    pub fn add(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 - &o.0)
    }

    pub fn mul(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 * &o.0) >> FRAC as usize)
    }

    pub fn div(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 << FRAC as usize) / &o.0)
    }

    pub fn sqrt(&self) -> Fixed {
        assert!(!self.0.is_negative());
        Fixed((&self.0 << FRAC as usize).sqrt())
    }

    pub fn to_f64(&self) -> f64 {
        // Keep 64 significant bits before the float conversion.
        let bits = self.0.bits() as i64;
        let drop = (bits - 64).max(0);
        let top = (&self.0 >> drop as usize).to_f64().unwrap();
        top * 2f64.powi((drop - FRAC as i64) as i32)
    }

    pub fn one() -> Fixed {
        Fixed(BigInt::one() << FRAC as usize)
    }
}

/// The bound equation evaluated term by term in fixed point.
pub fn geb_oracle(p: &BoundParams) -> f64 {
    let f = Fixed::from_f64;
    let (b, m, lp, h, c) = (f(p.b), f(p.m), f(p.lp), f(p.h), f(p.c));
    let q_base = Fixed::from_int(2)
        .mul(&f(p.beta_act).div(&f(p.alpha)))
        .mul(&f(p.omega))
        .mul(&f(p.kappa))
        .mul(&f(p.kappa));
    let q = q_base.mul(&q_base).mul(&q_base);
    let mut prod = Fixed::one();
    for fro in p.fro_norms {
        let fro = f(fro);
        prod = prod.mul(&Fixed::one().add(&f(p.n).div(&fro.mul(&fro))));
    }
    let weights = q.mul(&prod.sub(&Fixed::one())).sqrt();
    let mut data = c.mul(&c).mul(&c);
    for l in p.lambdas {
        data = data.mul(&f(l));
    }
    let bracket = data.add(&weights);
    let numer = b
        .mul(&b)
        .add(&Fixed::from_int(12).mul(&b).mul(&m).mul(&lp).mul(&h.sqrt()).mul(&bracket));
    let denom = Fixed::from_int(2).mul(&m).mul(&f(p.delta));
    numer.div(&denom).sqrt().to_f64()
}

/// Mean cross-entropy of a batch, straight from `forward`.
pub fn batch_loss(model: &MlpModel, x: &[f64], labels: &[usize]) -> f64 {
    let d = model.input_dim();
    let mut total = 0.0;
    for (row, &y) in x.chunks(d).zip(labels) {
        let p = model.forward(row).unwrap();
        total += twr_har::nn::cross_entropy(&p, y);
    }
    total / labels.len() as f64
}

/// Central finite difference of the batch loss in one weight.
pub fn finite_difference(model: &MlpModel, layer: usize, idx: usize, x: &[f64], labels: &[usize], h: f64) -> f64 {
    let mut plus = model.clone();
    plus.layers[layer].as_mut_slice()[idx] += h;
    let mut minus = model.clone();
    minus.layers[layer].as_mut_slice()[idx] -= h;
    (batch_loss(&plus, x, labels) - batch_loss(&minus, x, labels)) / (2.0 * h)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
