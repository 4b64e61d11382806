//! Empirical mode decomposition by envelope sifting.
//!
//! Envelopes are natural cubic splines through the local extrema, with the
//! two extrema nearest each end mirrored about the end sample so the splines
//! cover the whole record.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MIN_EMD_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmdConfig {
    pub max_imfs: usize,
    pub max_sift: usize,
    pub sift_sd_stop: f64,
    pub drop_imfs: usize,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            max_imfs: 8,
            max_sift: 10,
            sift_sd_stop: 0.3,
            drop_imfs: 1,
        }
    }
}

impl EmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_imfs == 0 || self.max_sift == 0 {
            return Err(Error::InvalidArgument("max_imfs and max_sift must be ≥ 1".into()));
        }
        if !(self.sift_sd_stop > 0.0 && self.sift_sd_stop < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sift_sd_stop must be in (0,1), got {}",
                self.sift_sd_stop
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdDecomposition {
    pub imfs: Vec<Vec<f64>>,
    pub residue: Vec<f64>,
}

impl EmdDecomposition {
    /// Sum of the IMFs from `skip` on plus the residue.
    pub fn reconstruct_from(&self, skip: usize) -> Vec<f64> {
        let mut out = self.residue.clone();
        for imf in self.imfs.iter().skip(skip) {
            out.iter_mut().zip(imf).for_each(|(o, v)| *o += v);
        }
        out
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        self.reconstruct_from(0)
    }
}

/// Indices of interior local maxima and minima. A plateau counts once, at
/// its first sample.
pub fn local_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..x.len().saturating_sub(1) {
        if x[i] > x[i - 1] && x[i] >= x[i + 1] {
            maxima.push(i);
        } else if x[i] < x[i - 1] && x[i] <= x[i + 1] {
            minima.push(i);
        }
    }
    (maxima, minima)
}

/// Natural cubic spline through `(xs, ys)` evaluated at `0..len`.
/// `xs` must be strictly increasing with at least two knots.
fn natural_spline(xs: &[f64], ys: &[f64], len: usize) -> Vec<f64> {
    let n = xs.len();
    debug_assert!(n >= 2);
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    // Second derivatives; natural boundary m[0] = m[n-1] = 0.
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
        }
        // Thomas algorithm; off-diagonals are h[i+1].
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
        }
    }
    let mut out = Vec::with_capacity(len);
    let mut seg = 0;
    for t in 0..len {
        let t = t as f64;
        while seg + 2 < n && t > xs[seg + 1] {
            seg += 1;
        }
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let hs = x1 - x0;
        let a = (x1 - t) / hs;
        let b = (t - x0) / hs;
        out.push(
            a * ys[seg]
                + b * ys[seg + 1]
                + ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * hs * hs / 6.0,
        );
    }
    out
}

fn envelope(x: &[f64], idx: &[usize]) -> Vec<f64> {
    let n = x.len();
    let last = (n - 1) as f64;
    let mirror = idx.len().min(2);
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(idx.len() + 2 * mirror);
    for &i in idx[..mirror].iter().rev() {
        knots.push((-(i as f64), x[i]));
    }
    knots.extend(idx.iter().map(|&i| (i as f64, x[i])));
    for &i in idx[idx.len() - mirror..].iter().rev() {
        knots.push((2.0 * last - i as f64, x[i]));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = knots.into_iter().unzip();
    natural_spline(&xs, &ys, n)
}

fn extrema_count(x: &[f64]) -> usize {
    let (mx, mn) = local_extrema(x);
    mx.len() + mn.len()
}

/// Sifts one IMF out of `x`. Returns `None` when `x` has too few extrema.
fn sift_one(x: &[f64], cfg: &EmdConfig) -> Option<Vec<f64>> {
    if extrema_count(x) < 3 {
        return None;
    }
    let mut h = x.to_vec();
    for _ in 0..cfg.max_sift {
        let (maxima, minima) = local_extrema(&h);
        if maxima.is_empty() || minima.is_empty() || maxima.len() + minima.len() < 3 {
            break;
        }
        let upper = envelope(&h, &maxima);
        let lower = envelope(&h, &minima);
        let next: Vec<f64> = h
            .iter()
            .zip(upper.iter().zip(&lower))
            .map(|(v, (u, l))| v - 0.5 * (u + l))
            .collect();
        let num: f64 = h.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = h.iter().map(|a| a * a).sum();
        h = next;
        if den == 0.0 || num / den < cfg.sift_sd_stop {
            break;
        }
    }
    Some(h)
}

fn decompose(signal: &[f64], cfg: &EmdConfig, max_imfs: usize) -> EmdDecomposition {
    let mut residue = signal.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < max_imfs {
        let Some(imf) = sift_one(&residue, cfg) else {
            break;
        };
        residue.iter_mut().zip(&imf).for_each(|(r, v)| *r -= v);
        imfs.push(imf);
    }
    EmdDecomposition { imfs, residue }
}

/// Full decomposition into at most `cfg.max_imfs` IMFs plus residue.
pub fn sift_imfs(signal: &[f64], cfg: &EmdConfig) -> Result<EmdDecomposition> {
    cfg.validate()?;
    if signal.len() < MIN_EMD_LEN {
        return Err(Error::InvalidArgument(format!(
            "EMD needs at least {MIN_EMD_LEN} samples, got {}",
            signal.len()
        )));
    }
    Ok(decompose(signal, cfg, cfg.max_imfs))
}

/// Removes the first `cfg.drop_imfs` IMFs from a series. Later IMFs do not
/// depend on extraction beyond that point, so only the dropped ones are sifted.
pub fn denoise_series(signal: &[f64], cfg: &EmdConfig) -> Vec<f64> {
    if signal.len() < MIN_EMD_LEN || cfg.drop_imfs == 0 {
        return signal.to_vec();
    }
    decompose(signal, cfg, cfg.drop_imfs.min(cfg.max_imfs)).residue
}
