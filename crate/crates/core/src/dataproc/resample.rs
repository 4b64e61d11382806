//! Linear resampling and the square-law axis stretch.

use serde::{Deserialize, Serialize};

use crate::Matrix;

/// Output side length of the enhanced maps.
pub const MAP_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StretchAxis {
    /// Rows of a range-time map; law `p = (i/(n-1))²·(L-1)`.
    Range,
    /// Rows of a Doppler-time map; the same law applied outward from the
    /// centre row in both directions.
    Doppler,
}

/// Source positions used by the square-law stretch, kept with each map.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisMapping {
    pub axis: StretchAxis,
    pub source_len: usize,
    pub positions: Vec<f64>,
}

/// Linear interpolation of `values` at fractional index `pos`, clamped to
/// the ends.
pub fn sample_linear(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    if pos <= 0.0 {
        return values[0];
    }
    if pos >= last as f64 {
        return values[last];
    }
    let i = pos.floor() as usize;
    let w = pos - i as f64;
    values[i] + w * (values[i + 1] - values[i])
}

/// Evenly spaced positions spanning `[0, len-1]`.
pub fn linear_positions(len: usize, n_out: usize) -> Vec<f64> {
    if n_out == 1 {
        return vec![0.0];
    }
    let scale = (len - 1) as f64 / (n_out - 1) as f64;
    (0..n_out).map(|i| i as f64 * scale).collect()
}

pub fn square_law_positions(axis: StretchAxis, len: usize, n_out: usize) -> Vec<f64> {
    let last = (len - 1) as f64;
    let denom = (n_out - 1) as f64;
    match axis {
        StretchAxis::Range => (0..n_out)
            .map(|i| {
                let u = i as f64 / denom;
                u * u * last
            })
            .collect(),
        StretchAxis::Doppler => {
            let center = last / 2.0;
            (0..n_out)
                .map(|i| {
                    let u = 2.0 * i as f64 / denom - 1.0;
                    center + u.signum() * u * u * center
                })
                .collect()
        }
    }
}

pub fn resample(values: &[f64], positions: &[f64]) -> Vec<f64> {
    positions.iter().map(|&p| sample_linear(values, p)).collect()
}

/// Resamples rows at `row_pos` and columns at `col_pos`.
pub fn resample_grid(map: &Matrix, row_pos: &[f64], col_pos: &[f64]) -> Matrix {
    let tmp: Vec<Vec<f64>> = (0..map.rows()).map(|r| resample(map.row(r), col_pos)).collect();
    let mut out = Matrix::zeros(row_pos.len(), col_pos.len());
    let mut column = vec![0.0; map.rows()];
    for c in 0..col_pos.len() {
        for (r, v) in column.iter_mut().enumerate() {
            *v = tmp[r][c];
        }
        for (r, &p) in row_pos.iter().enumerate() {
            out[(r, c)] = sample_linear(&column, p);
        }
    }
    out
}

pub fn resize_linear(map: &Matrix, rows: usize, cols: usize) -> Matrix {
    resample_grid(
        map,
        &linear_positions(map.rows(), rows),
        &linear_positions(map.cols(), cols),
    )
}
