//! Contrast-limited adaptive histogram equalization on `[0,1]` images.
//!
//! Follows the usual tile/clip/redistribute/bilinear-blend scheme. A tile
//! whose pixels all fall in one histogram bin maps values to themselves, so a
//! constant image comes back unchanged.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheConfig {
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self {
            tile_rows: 8,
            tile_cols: 8,
            clip_limit: 2.0,
            bins: 256,
        }
    }
}

impl ClaheConfig {
    pub fn validate_for(&self, rows: usize, cols: usize) -> Result<()> {
        if self.tile_rows == 0 || self.tile_cols == 0 || rows % self.tile_rows != 0 || cols % self.tile_cols != 0 {
            return Err(Error::InvalidArgument(format!(
                "{}x{} tiles do not divide a {rows}x{cols} image",
                self.tile_rows, self.tile_cols
            )));
        }
        if !(self.clip_limit >= 1.0) || self.bins < 2 {
            return Err(Error::InvalidArgument("clip_limit must be ≥ 1 and bins ≥ 2".into()));
        }
        Ok(())
    }
}

/// Per-tile value mapping.
enum TileMap {
    Identity,
    Lut(Vec<f64>),
}

fn bin_of(v: f64, bins: usize) -> usize {
    let b = (v.clamp(0.0, 1.0) * (bins - 1) as f64 + 0.5).floor() as usize;
    b.min(bins - 1)
}

impl TileMap {
    fn apply(&self, v: f64, bins: usize) -> f64 {
        match self {
            TileMap::Identity => v,
            TileMap::Lut(lut) => lut[bin_of(v, bins)],
        }
    }
}

fn clipped_histogram(hist: &mut [usize], limit: usize) {
    let bins = hist.len();
    let mut excess = 0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let batch = excess / bins;
    let residual = excess - batch * bins;
    hist.iter_mut().for_each(|h| *h += batch);
    if residual > 0 {
        let step = (bins / residual).max(1);
        for h in hist.iter_mut().step_by(step).take(residual) {
            *h += 1;
        }
    }
}

fn tile_map(img: &Matrix, r0: usize, c0: usize, th: usize, tw: usize, cfg: &ClaheConfig) -> TileMap {
    let bins = cfg.bins;
    let mut hist = vec![0usize; bins];
    for r in r0..r0 + th {
        for &v in &img.row(r)[c0..c0 + tw] {
            hist[bin_of(v, bins)] += 1;
        }
    }
    if hist.iter().filter(|&&h| h > 0).count() <= 1 {
        return TileMap::Identity;
    }
    let area = th * tw;
    let limit = ((cfg.clip_limit * area as f64 / bins as f64) as usize).max(1);
    clipped_histogram(&mut hist, limit);
    let mut acc = 0usize;
    let lut = hist
        .iter()
        .map(|&h| {
            acc += h;
            (acc as f64 / area as f64).min(1.0)
        })
        .collect();
    TileMap::Lut(lut)
}

/// Tile coordinate and blend weight for pixel `x` with tiles of size `size`.
fn tile_coord(x: usize, size: usize, tiles: usize) -> (usize, usize, f64) {
    let f = (x as f64 + 0.5) / size as f64 - 0.5;
    if f <= 0.0 {
        return (0, 0, 0.0);
    }
    let lo = f.floor() as usize;
    if lo + 1 >= tiles {
        return (tiles - 1, tiles - 1, 0.0);
    }
    (lo, lo + 1, f - lo as f64)
}

pub fn clahe(img: &Matrix, cfg: &ClaheConfig) -> Result<Matrix> {
    let (rows, cols) = img.shape();
    cfg.validate_for(rows, cols)?;
    let th = rows / cfg.tile_rows;
    let tw = cols / cfg.tile_cols;
    let maps: Vec<TileMap> = (0..cfg.tile_rows)
        .flat_map(|ty| (0..cfg.tile_cols).map(move |tx| (ty, tx)))
        .map(|(ty, tx)| tile_map(img, ty * th, tx * tw, th, tw, cfg))
        .collect();
    let map_at = |ty: usize, tx: usize| &maps[ty * cfg.tile_cols + tx];
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let (y1, y2, wy) = tile_coord(r, th, cfg.tile_rows);
        for c in 0..cols {
            let (x1, x2, wx) = tile_coord(c, tw, cfg.tile_cols);
            let v = img[(r, c)];
            let top = (1.0 - wx) * map_at(y1, x1).apply(v, cfg.bins) + wx * map_at(y1, x2).apply(v, cfg.bins);
            let bottom = (1.0 - wx) * map_at(y2, x1).apply(v, cfg.bins) + wx * map_at(y2, x2).apply(v, cfg.bins);
            out[(r, c)] = ((1.0 - wy) * top + wy * bottom).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_is_unchanged() {
        for v in [0.0, 0.37, 1.0] {
            let img = Matrix::from_fn(64, 64, |_, _| v);
            assert_eq!(clahe(&img, &ClaheConfig::default()).unwrap(), img);
        }
    }

    #[test]
    fn output_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let img = Matrix::from_fn(64, 64, |_, _| rng.gen_range(0.0..=1.0));
            let out = clahe(&img, &ClaheConfig::default()).unwrap();
            let (lo, hi) = out.min_max();
            assert!(lo >= 0.0 && hi <= 1.0);
        }
    }

    #[test]
    fn two_level_separation_does_not_shrink() {
        for vertical in [false, true] {
            let img = Matrix::from_fn(64, 64, |r, c| {
                let k = if vertical { c } else { r };
                if k < 32 {
                    0.2
                } else {
                    0.8
                }
            });
            let out = clahe(&img, &ClaheConfig::default()).unwrap();
            let level = |want: f64| {
                let vals: Vec<f64> = img
                    .as_slice()
                    .iter()
                    .zip(out.as_slice())
                    .filter(|(a, _)| **a == want)
                    .map(|(_, b)| *b)
                    .collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            assert!(level(0.8) - level(0.2) >= 0.6 - 1e-12);
        }
    }

    #[test]
    fn mixed_tile_stretches_contrast() {
        // Low-contrast ramp confined to [0.4, 0.6] gets spread out.
        let img = Matrix::from_fn(64, 64, |r, c| 0.4 + 0.2 * ((r * 64 + c) % 97) as f64 / 96.0);
        let out = clahe(&img, &ClaheConfig::default()).unwrap();
        let (lo, hi) = out.min_max();
        assert!(hi - lo > 0.2 + 1e-3, "range {lo}..{hi}");
    }

    #[test]
    fn rejects_indivisible_tiles() {
        let img = Matrix::zeros(60, 64);
        assert!(clahe(&img, &ClaheConfig::default()).is_err());
    }

    #[test]
    fn redistribution_preserves_mass() {
        let mut hist = vec![0, 10, 3, 0, 0, 40, 1, 0];
        let total: usize = hist.iter().sum();
        clipped_histogram(&mut hist, 5);
        assert_eq!(hist.iter().sum::<usize>(), total);
    }
}
