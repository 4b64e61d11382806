//! Generalization error bound of the three-layer linear network.
//!
//! ```text
//! GEB = sqrt( (B² + 12·B·M·L′·√h·(C³·Πλᵢ + sqrt(Q·(Π(1 + N/‖Wᵢ‖²_F) − 1)))) / (2·M·δ) )
//! Q   = (2·(β/α)·ω·κ²)³
//! ```
//!
//! `λᵢ` is the largest singular value of `Wᵢ`, `κ` the largest per-layer
//! condition number, `ω` the network width, `N` the number of optimizer
//! steps. The corner-feature model uses the same evaluator with its own
//! weights and width. Evaluation runs in log space so `Q` and the product
//! term cannot overflow.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::nn::{self, MlpModel, TrainTrace, N_CLASSES};
use crate::{Error, Matrix, Result};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 5000;
/// Singular values at or below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;
pub const DEFAULT_DELTA: f64 = 0.05;

/// Width pairing used by the relaxed comparison √(ωᴵ)³ < √ω³ − 1: corner
/// input length versus the two flattened 64×64 maps.
pub const RELAXED_OMEGA_REDUCED: f64 = 180.0;
pub const RELAXED_OMEGA_FULL: f64 = 8192.0;

/// Largest singular value by power iteration on `WᵀW`, started from the
/// normalized all-ones vector.
pub fn spectral_norm(w: &Matrix) -> Result<f64> {
    if w.rows() == 0 || w.cols() == 0 || !w.is_finite() {
        return Err(Error::InvalidArgument("spectral_norm needs a nonempty finite matrix".into()));
    }
    let n = w.cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut sigma = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let u = w.mul_vec(&v);
        let next_sigma = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let wtw = w.mul_vec_transposed(&u);
        let norm = wtw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let converged = (next_sigma - sigma).abs() <= POWER_TOL * next_sigma;
        sigma = next_sigma;
        if converged {
            return Ok(sigma);
        }
        v = wtw.into_iter().map(|x| x / norm).collect();
    }
    // Nearly equal leading singular values stall the iteration; take the
    // dense decomposition instead.
    let top = singular_values(w).into_iter().fold(0.0, f64::max);
    if top.is_finite() {
        Ok(top)
    } else {
        Err(Error::NonConvergence {
            what: "power iteration",
            iterations: POWER_MAX_ITER,
            last_estimate: sigma,
        })
    }
}

fn singular_values(w: &Matrix) -> Vec<f64> {
    DMatrix::from_row_slice(w.rows(), w.cols(), w.as_slice())
        .singular_values()
        .iter()
        .copied()
        .collect()
}

/// `σ_max / σ_min` over the singular values above `1e-12·σ_max`.
pub fn condition_bound(w: &Matrix) -> Result<f64> {
    if w.rows() == 0 || w.cols() == 0 || !w.is_finite() {
        return Err(Error::InvalidArgument("condition_bound needs a nonempty finite matrix".into()));
    }
    let sv = singular_values(w);
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Numeric("condition number of a zero matrix".into()));
    }
    let min = sv
        .iter()
        .copied()
        .filter(|&s| s > RANK_TOL * max)
        .fold(f64::INFINITY, f64::min);
    Ok(max / min)
}

/// Constants of the loss and activation, fixed by the network design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    /// Loss bound `B`.
    pub b: f64,
    /// Lipschitz constant `L′` of the loss in the logits.
    pub lp: f64,
    /// Number of labels `h`.
    pub h: f64,
    /// Activation Lipschitz constant `C`.
    pub c: f64,
    pub alpha: f64,
    pub beta_act: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            b: nn::loss_bound(),
            // ∇ of softmax cross-entropy w.r.t. logits is p − y, ‖p − y‖₂ ≤ √2.
            lp: std::f64::consts::SQRT_2,
            h: N_CLASSES as f64,
            c: 1.0,
            alpha: nn::LEAKY_SLOPE,
            beta_act: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub b: f64,
    /// Training set size.
    pub m: f64,
    pub lp: f64,
    pub h: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta_act: f64,
    pub delta: f64,
    /// Training rounds.
    pub n: f64,
    pub lambdas: [f64; 3],
    pub kappa: f64,
    pub fro_norms: [f64; 3],
    pub omega: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must be in (0,1), got {}", self.delta)));
        }
        let positive = [self.b, self.m, self.h, self.c, self.alpha, self.beta_act, self.omega];
        if !positive.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-positive bound parameter in {self:?}")));
        }
        if !(self.lp >= 0.0 && self.n >= 0.0 && self.kappa >= 1.0) {
            return Err(Error::InvalidArgument(format!("need L′ ≥ 0, N ≥ 0, κ ≥ 1 in {self:?}")));
        }
        for i in 0..3 {
            if !(self.fro_norms[i] > 0.0 && self.lambdas[i] >= 0.0) {
                return Err(Error::InvalidArgument(format!("bad norms for layer {}", i + 1)));
            }
            if self.lambdas[i] > self.fro_norms[i] + 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "λ{} = {} exceeds ‖W{}‖_F = {}",
                    i + 1,
                    self.lambdas[i],
                    i + 1,
                    self.fro_norms[i]
                )));
            }
        }
        Ok(())
    }

    pub fn with_omega(self, omega: f64) -> Self {
        Self { omega, ..self }
    }
}

/// `ln(eᵃ + eᵇ)` without overflow.
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(eˢ − 1)` for `s ≥ 0`.
fn log_expm1(s: f64) -> f64 {
    if s == 0.0 {
        f64::NEG_INFINITY
    } else if s > 30.0 {
        s + (-(-s).exp()).ln_1p()
    } else {
        s.exp_m1().ln()
    }
}

/// Natural log of `Q = (2(β/α)ωκ²)³`.
pub fn log_q_factor(p: &BoundParams) -> f64 {
    3.0 * (2.0 * (p.beta_act / p.alpha) * p.omega * p.kappa * p.kappa).ln()
}

pub fn q_factor(p: &BoundParams) -> f64 {
    log_q_factor(p).exp()
}

/// All intermediate quantities of one bound evaluation. `ln_*` fields are
/// natural logs and stay finite when the linear value overflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GebTerms {
    pub ln_q: f64,
    /// `ln(Π(1 + N/‖Wᵢ‖²_F) − 1)`.
    pub ln_product_term: f64,
    /// `C³·Πλᵢ`
    pub gamma_data: f64,
    /// `ln sqrt(Q·(Π(1 + N/‖Wᵢ‖²_F) − 1))`
    pub ln_gamma_weights: f64,
    /// `12·B·M·L′·√h`
    pub prefactor: f64,
    pub ln_numerator: f64,
    pub denominator: f64,
    pub ln_geb: f64,
}

impl GebTerms {
    pub fn geb(&self) -> f64 {
        self.ln_geb.exp()
    }

    pub fn gamma_weights(&self) -> f64 {
        self.ln_gamma_weights.exp()
    }

    pub fn q(&self) -> f64 {
        self.ln_q.exp()
    }
}

/// Single evaluator behind [`geb`] and [`geb_improved`].
pub fn geb_terms(p: &BoundParams) -> Result<GebTerms> {
    p.validate()?;
    let ln_q = log_q_factor(p);
    let ln_sum: f64 = p
        .fro_norms
        .iter()
        .map(|f| (p.n / (f * f)).ln_1p())
        .sum();
    let ln_product_term = log_expm1(ln_sum);
    let gamma_data = p.c.powi(3) * p.lambdas.iter().product::<f64>();
    let ln_gamma_weights = 0.5 * (ln_q + ln_product_term);
    let prefactor = 12.0 * p.b * p.m * p.lp * p.h.sqrt();
    let ln_gamma = log_add_exp(gamma_data.ln(), ln_gamma_weights);
    let ln_numerator = log_add_exp(2.0 * p.b.ln(), prefactor.ln() + ln_gamma);
    let denominator = 2.0 * p.m * p.delta;
    let ln_geb = 0.5 * (ln_numerator - denominator.ln());
    if !ln_geb.is_finite() {
        return Err(Error::Numeric(format!("bound evaluation produced {ln_geb}")));
    }
    Ok(GebTerms {
        ln_q,
        ln_product_term,
        gamma_data,
        ln_gamma_weights,
        prefactor,
        ln_numerator,
        denominator,
        ln_geb,
    })
}

pub fn geb(p: &BoundParams) -> Result<f64> {
    Ok(geb_terms(p)?.geb())
}

/// Bound of the corner-feature model; same formula, reduced-model inputs.
pub fn geb_improved(p_reduced: &BoundParams) -> Result<f64> {
    geb(p_reduced)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProofComparison {
    /// Reduced-model bracket `C³Πλᴵ + sqrt(Qᴵ(…))`.
    pub proof1_lhs: f64,
    /// Full-model bracket `C³Πλ + sqrt(Q(…))`.
    pub proof1_rhs: f64,
    pub proof1_holds: bool,
    /// `sqrt(Qᴵ(…))`
    pub proof2_lhs: f64,
    /// `sqrt(Q(…)) − C³`
    pub proof2_rhs: f64,
    pub proof2_holds: bool,
    /// `√(ωᴵ)³`
    pub relax_lhs: f64,
    /// `√ω³ − 1`
    pub relax_rhs: f64,
    pub relax_holds: bool,
}

impl ProofComparison {
    pub fn relax_ratio(&self) -> f64 {
        self.relax_lhs / self.relax_rhs
    }
}

/// Evaluates both sufficient conditions for `GEBᴵ < GEB` plus the relaxed
/// width comparison with the given literal widths.
pub fn proof_condition_with_widths(
    full: &BoundParams,
    reduced: &BoundParams,
    omega_reduced: f64,
    omega_full: f64,
) -> Result<ProofComparison> {
    let tf = geb_terms(full)?;
    let tr = geb_terms(reduced)?;
    let proof1_lhs = tr.gamma_data + tr.gamma_weights();
    let proof1_rhs = tf.gamma_data + tf.gamma_weights();
    let proof2_lhs = tr.gamma_weights();
    let proof2_rhs = tf.gamma_weights() - full.c.powi(3);
    let relax_lhs = omega_reduced.powi(3).sqrt();
    let relax_rhs = omega_full.powi(3).sqrt() - 1.0;
    Ok(ProofComparison {
        proof1_lhs,
        proof1_rhs,
        proof1_holds: proof1_lhs <= proof1_rhs,
        proof2_lhs,
        proof2_rhs,
        proof2_holds: proof2_lhs <= proof2_rhs,
        relax_lhs,
        relax_rhs,
        relax_holds: relax_lhs < relax_rhs,
    })
}

pub fn proof_condition(full: &BoundParams, reduced: &BoundParams) -> Result<ProofComparison> {
    proof_condition_with_widths(full, reduced, RELAXED_OMEGA_REDUCED, RELAXED_OMEGA_FULL)
}

/// End-of-training loss and accuracy gaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalGap {
    pub loss_gap_test1: f64,
    pub loss_gap_test2: f64,
    /// Mean test loss minus training loss.
    pub loss_gap: f64,
    pub acc_gap_val_test1: f64,
    pub acc_gap_val_test2: f64,
    pub acc_gap_train_test: f64,
}

pub fn empirical_gap(trace: &TrainTrace) -> Result<EmpiricalGap> {
    if trace.n_rounds == 0 || trace.evals.is_empty() {
        return Err(Error::InvalidArgument("training trace is incomplete".into()));
    }
    use nn::SplitKind::*;
    let (train, val, t1, t2) = (
        trace.final_of(Train),
        trace.final_of(Val),
        trace.final_of(Test1),
        trace.final_of(Test2),
    );
    Ok(EmpiricalGap {
        loss_gap_test1: t1.loss - train.loss,
        loss_gap_test2: t2.loss - train.loss,
        loss_gap: 0.5 * (t1.loss + t2.loss) - train.loss,
        acc_gap_val_test1: val.accuracy - t1.accuracy,
        acc_gap_val_test2: val.accuracy - t2.accuracy,
        acc_gap_train_test: train.accuracy - 0.5 * (t1.accuracy + t2.accuracy),
    })
}

/// Bound ingredients of a trained model. `ω` is the largest layer width,
/// input included.
pub fn extract_params(model: &MlpModel, trace: &TrainTrace, spec: &LossSpec, delta: f64) -> Result<BoundParams> {
    let mut lambdas = [0.0; 3];
    let mut fro_norms = [0.0; 3];
    let mut kappa: f64 = 1.0;
    for (i, w) in model.layers.iter().enumerate() {
        lambdas[i] = spectral_norm(w)?;
        fro_norms[i] = w.frobenius_norm();
        kappa = kappa.max(condition_bound(w)?);
    }
    let p = BoundParams {
        b: spec.b,
        m: trace.n_train as f64,
        lp: spec.lp,
        h: spec.h,
        c: spec.c,
        alpha: spec.alpha,
        beta_act: spec.beta_act,
        delta,
        n: trace.n_rounds as f64,
        lambdas,
        kappa,
        fro_norms,
        omega: model.max_width() as f64,
    };
    p.validate()?;
    Ok(p)
}

/// Everything reported for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GebReport {
    pub seed: u64,
    pub full: BoundParams,
    pub reduced: BoundParams,
    pub terms_full: GebTerms,
    pub terms_reduced: GebTerms,
    pub geb: f64,
    pub geb_improved: f64,
    pub ratio: f64,
    /// Same bounds with `ω` set to the input length (8192 and 180).
    pub geb_literal: f64,
    pub geb_improved_literal: f64,
    pub proof: ProofComparison,
    pub gap_full: EmpiricalGap,
    pub gap_reduced: EmpiricalGap,
    pub bound_holds: bool,
    pub bound_holds_reduced: bool,
}

impl GebReport {
    pub fn build(
        seed: u64,
        full: BoundParams,
        reduced: BoundParams,
        gap_full: EmpiricalGap,
        gap_reduced: EmpiricalGap,
        input_dims: (usize, usize),
    ) -> Result<Self> {
        let terms_full = geb_terms(&full)?;
        let terms_reduced = geb_terms(&reduced)?;
        let geb = terms_full.geb();
        let geb_improved = terms_reduced.geb();
        let geb_literal = self::geb(&full.with_omega(input_dims.0 as f64))?;
        let geb_improved_literal = self::geb(&reduced.with_omega(input_dims.1 as f64))?;
        let proof = proof_condition_with_widths(&full, &reduced, input_dims.1 as f64, input_dims.0 as f64)?;
        Ok(Self {
            seed,
            full,
            reduced,
            terms_full,
            terms_reduced,
            geb,
            geb_improved,
            ratio: (terms_reduced.ln_geb - terms_full.ln_geb).exp(),
            geb_literal,
            geb_improved_literal,
            proof,
            gap_full,
            gap_reduced,
            bound_holds: gap_full.loss_gap <= geb,
            bound_holds_reduced: gap_reduced.loss_gap <= geb_improved,
        })
    }

    /// Column names of [`GebReport::csv_row`].
    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["seed".to_string()];
        for model in ["full", "reduced"] {
            for f in [
                "lambda1", "lambda2", "lambda3", "kappa", "fro1", "fro2", "fro3", "omega", "n_rounds", "m",
                "log10_q", "gamma_data", "log10_gamma_weights", "log10_numerator", "log10_geb",
            ] {
                h.push(format!("{model}_{f}"));
            }
        }
        for f in [
            "geb",
            "geb_improved",
            "ratio",
            "geb_literal",
            "geb_improved_literal",
            "proof1_lhs",
            "proof1_rhs",
            "proof1_holds",
            "proof2_lhs",
            "proof2_rhs",
            "proof2_holds",
            "relax_lhs",
            "relax_rhs",
            "relax_holds",
            "empirical_gap_full",
            "empirical_gap_reduced",
            "bound_holds",
            "bound_holds_reduced",
            "b",
            "lp",
            "h",
            "c",
            "alpha",
            "beta_act",
            "delta",
        ] {
            h.push(f.to_string());
        }
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let log10 = |ln: f64| ln / std::f64::consts::LN_10;
        let mut row = vec![self.seed.to_string()];
        for (p, t) in [(&self.full, &self.terms_full), (&self.reduced, &self.terms_reduced)] {
            let vals = [
                p.lambdas[0],
                p.lambdas[1],
                p.lambdas[2],
                p.kappa,
                p.fro_norms[0],
                p.fro_norms[1],
                p.fro_norms[2],
                p.omega,
                p.n,
                p.m,
                log10(t.ln_q),
                t.gamma_data,
                log10(t.ln_gamma_weights),
                log10(t.ln_numerator),
                log10(t.ln_geb),
            ];
            row.extend(vals.iter().map(|v| v.to_string()));
        }
        let pr = &self.proof;
        row.extend([
            self.geb.to_string(),
            self.geb_improved.to_string(),
            self.ratio.to_string(),
            self.geb_literal.to_string(),
            self.geb_improved_literal.to_string(),
            pr.proof1_lhs.to_string(),
            pr.proof1_rhs.to_string(),
            pr.proof1_holds.to_string(),
            pr.proof2_lhs.to_string(),
            pr.proof2_rhs.to_string(),
            pr.proof2_holds.to_string(),
            pr.relax_lhs.to_string(),
            pr.relax_rhs.to_string(),
            pr.relax_holds.to_string(),
            self.gap_full.loss_gap.to_string(),
            self.gap_reduced.loss_gap.to_string(),
            self.bound_holds.to_string(),
            self.bound_holds_reduced.to_string(),
            self.full.b.to_string(),
            self.full.lp.to_string(),
            self.full.h.to_string(),
            self.full.c.to_string(),
            self.full.alpha.to_string(),
            self.full.beta_act.to_string(),
            self.full.delta.to_string(),
        ]);
        row
    }

    pub fn text_block(&self) -> String {
        let mut s = String::new();
        let log10 = |ln: f64| ln / std::f64::consts::LN_10;
        let _ = writeln!(s, "seed {}", self.seed);
        for (name, p, t) in [
            ("full", &self.full, &self.terms_full),
            ("reduced", &self.reduced, &self.terms_reduced),
        ] {
            let _ = writeln!(s, "  [{name}] omega={} N={} M={} kappa={:.6}", p.omega, p.n, p.m, p.kappa);
            let _ = writeln!(
                s,
                "    lambda=({:.6}, {:.6}, {:.6})  |W|_F=({:.6}, {:.6}, {:.6})",
                p.lambdas[0], p.lambdas[1], p.lambdas[2], p.fro_norms[0], p.fro_norms[1], p.fro_norms[2]
            );
            let _ = writeln!(
                s,
                "    log10 Q={:.4}  C^3*prod(lambda)={:.6e}  log10 sqrt-term={:.4}  log10 GEB={:.4}",
                log10(t.ln_q),
                t.gamma_data,
                log10(t.ln_gamma_weights),
                log10(t.ln_geb)
            );
        }
        let _ = writeln!(
            s,
            "  GEB={:.6e}  GEB_I={:.6e}  ratio={:.6e}  (omega = input length: {:.6e} / {:.6e})",
            self.geb, self.geb_improved, self.ratio, self.geb_literal, self.geb_improved_literal
        );
        let pr = &self.proof;
        let _ = writeln!(
            s,
            "  bracket: {:.6e} <= {:.6e} : {}",
            pr.proof1_lhs, pr.proof1_rhs, pr.proof1_holds
        );
        let _ = writeln!(
            s,
            "  weight term: {:.6e} <= {:.6e} : {}",
            pr.proof2_lhs, pr.proof2_rhs, pr.proof2_holds
        );
        let _ = writeln!(
            s,
            "  relaxed widths: {:.6} < {:.6} : {} (ratio {:.6e})",
            pr.relax_lhs,
            pr.relax_rhs,
            pr.relax_holds,
            pr.relax_ratio()
        );
        let _ = writeln!(
            s,
            "  empirical loss gap: full {:.6} (bound holds: {}), reduced {:.6} (bound holds: {})",
            self.gap_full.loss_gap, self.bound_holds, self.gap_reduced.loss_gap, self.bound_holds_reduced
        );
        s
    }
}
