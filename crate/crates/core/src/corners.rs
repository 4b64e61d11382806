//! Micro-Doppler corner point cloud (PC-RD).
//!
//! Thirty corners are taken from each enhanced map with a difference of
//! Gaussians detector. Each corner knows its time and its own axis
//! (range or Doppler); the missing coordinate is read off the other map by
//! non-maximum suppression along the column at the same time.

use serde::{Deserialize, Serialize};

use crate::dataproc::{EnhancedMap, MAP_SIZE};
use crate::{Error, Matrix, Result};

/// Corners detected per map.
pub const CORNERS_PER_MAP: usize = 30;
pub const CLOUD_ROWS: usize = 2 * CORNERS_PER_MAP;
pub const CLOUD_LEN: usize = CLOUD_ROWS * 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DogConfig {
    pub sigma1: f64,
    pub k: f64,
    pub nms_radius: usize,
}

impl Default for DogConfig {
    fn default() -> Self {
        Self {
            sigma1: 1.0,
            k: 1.6,
            nms_radius: 5,
        }
    }
}

impl DogConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.k > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need sigma1 > 0 and k > 1, got {} and {}",
                self.sigma1, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerPoint {
    /// Column / 63.
    pub t: f64,
    /// Row / 63, range or Doppler depending on the source map.
    pub v: f64,
    /// `|DoG|` at the corner; zero marks a padding point.
    pub response: f64,
}

impl CornerPoint {
    pub const PAD: CornerPoint = CornerPoint {
        t: 0.0,
        v: 0.0,
        response: 0.0,
    };

    pub fn is_pad(&self) -> bool {
        self.response == 0.0
    }

    pub fn pixel(&self) -> (usize, usize) {
        let scale = (MAP_SIZE - 1) as f64;
        ((self.v * scale).round() as usize, (self.t * scale).round() as usize)
    }
}

/// 60×3 cloud of `(t, range, doppler)` rows: R²TM corners first, then D²TM.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudRD {
    pub points: Matrix,
}

impl PointCloudRD {
    pub fn zeros() -> Self {
        Self {
            points: Matrix::zeros(CLOUD_ROWS, 3),
        }
    }

    /// Row-major flatten, length 180.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.as_slice().to_vec()
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        Ok(Self {
            points: Matrix::from_vec(CLOUD_ROWS, 3, values.to_vec())?,
        })
    }
}

pub fn flatten_pcrd(pc: &PointCloudRD) -> Vec<f64> {
    pc.flatten()
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

fn convolve_1d(values: &[f64], kernel: &[f64], out: &mut [f64]) {
    let r = (kernel.len() / 2) as i64;
    let n = values.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = kernel
            .iter()
            .enumerate()
            .map(|(j, w)| w * values[reflect(i as i64 + j as i64 - r, n)])
            .sum();
    }
}

pub fn gaussian_blur(map: &Matrix, sigma: f64) -> Matrix {
    let kernel = gaussian_kernel(sigma);
    let (rows, cols) = map.shape();
    let mut tmp = Matrix::zeros(rows, cols);
    for r in 0..rows {
        convolve_1d(map.row(r), &kernel, tmp.row_mut(r));
    }
    let mut out = Matrix::zeros(rows, cols);
    let mut col_out = vec![0.0; rows];
    for c in 0..cols {
        convolve_1d(&tmp.column(c), &kernel, &mut col_out);
        out.set_column(c, &col_out);
    }
    out
}

/// `G(k·σ₁) ⋆ map − G(σ₁) ⋆ map`, reflect-padded.
pub fn dog_response_matrix(map: &Matrix, cfg: &DogConfig) -> Matrix {
    let wide = gaussian_blur(map, cfg.k * cfg.sigma1);
    let narrow = gaussian_blur(map, cfg.sigma1);
    Matrix::from_fn(map.rows(), map.cols(), |r, c| wide[(r, c)] - narrow[(r, c)])
}

pub fn dog_response(map: &EnhancedMap, cfg: &DogConfig) -> Matrix {
    dog_response_matrix(&map.data, cfg)
}

/// Strict 3×3 local maxima of `|response|` as `(|r|, row, col)`.
fn strict_maxima(response: &Matrix) -> Vec<(f64, usize, usize)> {
    let (rows, cols) = response.shape();
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = response[(r, c)].abs();
            let mut is_max = true;
            'scan: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    if response[(nr as usize, nc as usize)].abs() >= v {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                out.push((v, r, c));
            }
        }
    }
    out
}

/// Exactly [`CORNERS_PER_MAP`] corners: strongest strict maxima first,
/// suppressing any within Chebyshev distance `nms_radius` of an accepted
/// one, ties by `(row, col)`; missing corners are `(0,0,0)` pads.
pub fn detect_corners(response: &Matrix, cfg: &DogConfig) -> Vec<CornerPoint> {
    let mut candidates = strict_maxima(response);
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let scale = (MAP_SIZE - 1) as f64;
    let radius = cfg.nms_radius;
    let mut accepted: Vec<(usize, usize)> = Vec::with_capacity(CORNERS_PER_MAP);
    let mut corners = Vec::with_capacity(CORNERS_PER_MAP);
    for (v, r, c) in candidates {
        if corners.len() == CORNERS_PER_MAP {
            break;
        }
        let clear = accepted
            .iter()
            .all(|&(ar, ac)| r.abs_diff(ar).max(c.abs_diff(ac)) > radius);
        if clear {
            accepted.push((r, c));
            corners.push(CornerPoint {
                t: c as f64 / scale,
                v: r as f64 / scale,
                response: v,
            });
        }
    }
    corners.resize(CORNERS_PER_MAP, CornerPoint::PAD);
    corners
}

/// Index of the strongest strict local maximum within `±radius`; `None` when
/// no sample qualifies (e.g. a flat column). Ties go to the lower index.
pub fn nms_peak_1d(values: &[f64], radius: usize) -> Option<usize> {
    let n = values.len();
    let mut best: Option<usize> = None;
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let strict = (lo..=hi).all(|j| j == i || values[j] < values[i]);
        if strict && best.map_or(true, |b| values[i] > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Fills the missing coordinate of `corner` from the other map's column at
/// the same time.
pub fn complete_third_dim(corner: &CornerPoint, other: &EnhancedMap, cfg: &DogConfig) -> f64 {
    let scale = (MAP_SIZE - 1) as f64;
    let col = (corner.t.clamp(0.0, 1.0) * scale).round() as usize;
    let column = other.data.column(col.min(other.data.cols() - 1));
    nms_peak_1d(&column, cfg.nms_radius).map_or(0.0, |i| i as f64 / scale)
}

pub fn build_pcrd(r2tm: &EnhancedMap, d2tm: &EnhancedMap, cfg: &DogConfig) -> Result<PointCloudRD> {
    cfg.validate()?;
    let range_corners = detect_corners(&dog_response(r2tm, cfg), cfg);
    let doppler_corners = detect_corners(&dog_response(d2tm, cfg), cfg);
    let mut pc = PointCloudRD::zeros();
    for (i, c) in range_corners.iter().enumerate() {
        if !c.is_pad() {
            let doppler = complete_third_dim(c, d2tm, cfg);
            pc.points.row_mut(i).copy_from_slice(&[c.t, c.v, doppler]);
        }
    }
    for (i, c) in doppler_corners.iter().enumerate() {
        if !c.is_pad() {
            let range = complete_third_dim(c, r2tm, cfg);
            pc.points
                .row_mut(CORNERS_PER_MAP + i)
                .copy_from_slice(&[c.t, range, c.v]);
        }
    }
    Ok(pc)
}
