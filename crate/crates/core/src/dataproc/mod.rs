//! Image enhancement of the radar maps.
//!
//! Fixed order: min-max normalization, EMD denoising along slow time,
//! renormalization, resize to 64×64, CLAHE, square-law axis stretch. The
//! results are the R²TM (from the RTM) and D²TM (from the DTM).

pub mod clahe;
pub mod emd;
pub mod resample;

pub use clahe::{clahe, ClaheConfig};
pub use emd::{sift_imfs, EmdConfig, EmdDecomposition};
pub use resample::{AxisMapping, StretchAxis, MAP_SIZE};

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    R2tm,
    D2tm,
}

impl MapKind {
    pub fn axis(self) -> StretchAxis {
        match self {
            MapKind::R2tm => StretchAxis::Range,
            MapKind::D2tm => StretchAxis::Doppler,
        }
    }
}

/// A 64×64 enhanced map with entries in `[0,1]`. Rows are range (R²TM) or
/// Doppler (D²TM), columns are time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedMap {
    pub data: Matrix,
    pub kind: MapKind,
    pub axis_mapping: AxisMapping,
}

impl EnhancedMap {
    /// Wraps an existing 64×64 `[0,1]` image without further processing.
    pub fn from_matrix(data: Matrix, kind: MapKind) -> Result<Self> {
        if data.shape() != (MAP_SIZE, MAP_SIZE) {
            return Err(Error::dims("64x64", format!("{:?}", data.shape())));
        }
        if !data.as_slice().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("map entries must lie in [0,1]".into()));
        }
        let axis = kind.axis();
        Ok(Self {
            data,
            kind,
            axis_mapping: AxisMapping {
                axis,
                source_len: MAP_SIZE,
                positions: resample::linear_positions(MAP_SIZE, MAP_SIZE),
            },
        })
    }

    /// Row-major flatten, length 4096.
    pub fn flatten(&self) -> &[f64] {
        self.data.as_slice()
    }
}

/// `(x − min)/(max − min)`; a constant input maps to zeros.
pub fn minmax_norm(map: &Matrix) -> Matrix {
    let (lo, hi) = map.min_max();
    if !(hi > lo) {
        return Matrix::zeros(map.rows(), map.cols());
    }
    let span = hi - lo;
    map.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// Row-wise EMD, reconstructing each row without its first `drop_imfs`
/// IMFs. Rows shorter than eight samples, or without IMFs, pass through.
pub fn emd_denoise(map: &Matrix, cfg: &EmdConfig) -> Result<Matrix> {
    cfg.validate()?;
    let mut out = map.clone();
    for r in 0..map.rows() {
        let row = emd::denoise_series(map.row(r), cfg);
        out.row_mut(r).copy_from_slice(&row);
    }
    Ok(out)
}

/// Stretches the chosen axis with the square law and linearly resamples the
/// time axis, both to 64 samples. Output is clamped to `[0,1]`.
pub fn square_axis_interp(map: &Matrix, axis: StretchAxis) -> EnhancedMap {
    let row_pos = resample::square_law_positions(axis, map.rows(), MAP_SIZE);
    let col_pos = resample::linear_positions(map.cols(), MAP_SIZE);
    let data = resample::resample_grid(map, &row_pos, &col_pos).map(|v| v.clamp(0.0, 1.0));
    let kind = match axis {
        StretchAxis::Range => MapKind::R2tm,
        StretchAxis::Doppler => MapKind::D2tm,
    };
    EnhancedMap {
        data,
        kind,
        axis_mapping: AxisMapping {
            axis,
            source_len: map.rows(),
            positions: row_pos,
        },
    }
}

/// Full enhancement chain for an RTM or DTM magnitude image.
pub fn enhance(map: &Matrix, kind: MapKind, emd_cfg: &EmdConfig, clahe_cfg: &ClaheConfig) -> Result<EnhancedMap> {
    if map.rows() == 0 || map.cols() == 0 || !map.is_finite() {
        return Err(Error::InvalidArgument("map must be nonempty and finite".into()));
    }
    let normed = minmax_norm(map);
    let denoised = emd_denoise(&normed, emd_cfg)?;
    let renormed = minmax_norm(&denoised);
    let small = resample::resize_linear(&renormed, MAP_SIZE, MAP_SIZE);
    let equalized = clahe(&small, clahe_cfg)?;
    Ok(square_axis_interp(&equalized, kind.axis()))
}
