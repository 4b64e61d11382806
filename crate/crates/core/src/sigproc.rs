//! Range-time and Doppler-time maps from frequency-domain echoes.
//!
//! Each slow-time column of the echo is inverse transformed over frequency to
//! a range profile. The magnitudes form the range-time map (RTM); the complex
//! profiles are summed over range and passed through a short-time Fourier
//! transform to give the Doppler-time map (DTM).

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::matrix::ComplexMatrix;
use crate::radar_sim::{FrequencyEcho, RadarConfig};
use crate::{Error, Matrix, Result};

/// Number of taps of the demodulation low-pass filter.
pub const LOWPASS_TAPS: usize = 129;

/// Oversampling factor of the simulated carrier time signal.
const CARRIER_OVERSAMPLE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RangeTimeMap {
    /// `n_range × n_slow` magnitudes.
    pub data: Matrix,
    pub range_res: f64,
    pub prf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerTimeMap {
    /// `n_doppler × n_frames` magnitudes; row `n_doppler / 2` is zero Doppler.
    pub data: Matrix,
    pub doppler_res: f64,
    pub hop: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub n_doppler_keep: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 128,
            hop: 14,
            n_doppler_keep: 64,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::InvalidArgument(format!(
                "STFT hop must be in 1..={}, got {}",
                self.window_len, self.hop
            )));
        }
        if self.n_doppler_keep == 0 || self.n_doppler_keep > self.window_len {
            return Err(Error::InvalidArgument(format!(
                "n_doppler_keep must be in 1..={}",
                self.window_len
            )));
        }
        Ok(())
    }

    pub fn n_frames(&self, n_slow: usize) -> usize {
        if n_slow < self.window_len {
            0
        } else {
            (n_slow - self.window_len) / self.hop + 1
        }
    }
}

/// Symmetric Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

fn transform_columns(input: &ComplexMatrix, inverse: bool) -> ComplexMatrix {
    let (rows, cols) = input.shape();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(rows)
    } else {
        planner.plan_fft_forward(rows)
    };
    let mut out = input.clone();
    let mut column = vec![Complex64::default(); rows];
    let scale = if inverse { 1.0 / rows as f64 } else { 1.0 };
    for c in 0..cols {
        for (r, v) in column.iter_mut().enumerate() {
            *v = input[(r, c)];
        }
        fft.process(&mut column);
        for (r, v) in column.iter().enumerate() {
            out[(r, c)] = v * scale;
        }
    }
    out
}

/// Column-wise inverse DFT, `x[k] = (1/N) Σ X[m] e^{+j2πmk/N}`.
pub fn ifft_columns(input: &ComplexMatrix) -> ComplexMatrix {
    transform_columns(input, true)
}

/// Column-wise forward DFT, the exact inverse of [`ifft_columns`].
pub fn fft_columns(input: &ComplexMatrix) -> ComplexMatrix {
    transform_columns(input, false)
}

/// Range profiles of a baseband echo: one inverse DFT per slow-time frame.
pub fn ifft_range_profile(echo: &FrequencyEcho) -> ComplexMatrix {
    ifft_columns(&echo.data)
}

/// Windowed-sinc low-pass design, Hamming window, unit DC gain.
pub fn lowpass_taps(cutoff: f64, fs: f64) -> Vec<f64> {
    let center = (LOWPASS_TAPS - 1) as f64 / 2.0;
    let fc = cutoff / fs;
    let window = hamming(LOWPASS_TAPS);
    let mut taps: Vec<f64> = (0..LOWPASS_TAPS)
        .map(|n| {
            let x = n as f64 - center;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            sinc * window[n]
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= gain);
    taps
}

/// Complex frequency response of an FIR filter at `freq` (Hz).
pub fn fir_response(taps: &[f64], freq: f64, fs: f64) -> Complex64 {
    taps.iter()
        .enumerate()
        .map(|(n, &h)| h * Complex64::from_polar(1.0, -2.0 * PI * freq * n as f64 / fs))
        .sum()
}

/// Mixes `signal` down by `fc` and low-pass filters it.
///
/// The filter is applied with its group delay removed and the input padded by
/// repeating the edge samples, so the output has the input's length and time
/// alignment.
pub fn demodulate(signal: &[Complex64], fc: f64, fs: f64, cutoff: f64) -> Result<Vec<Complex64>> {
    if !(fs > 0.0 && cutoff > 0.0 && cutoff < fs / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff} must lie in (0, fs/2 = {})",
            fs / 2.0
        )));
    }
    if signal.is_empty() {
        return Ok(Vec::new());
    }
    let mixed: Vec<Complex64> = signal
        .iter()
        .enumerate()
        .map(|(n, &s)| s * Complex64::from_polar(1.0, -2.0 * PI * fc * n as f64 / fs))
        .collect();
    let taps = lowpass_taps(cutoff, fs);
    let half = LOWPASS_TAPS / 2;
    let first = mixed[0];
    let last = mixed[mixed.len() - 1];
    let padded: Vec<Complex64> = std::iter::repeat(first)
        .take(half)
        .chain(mixed.iter().copied())
        .chain(std::iter::repeat(last).take(half))
        .collect();
    Ok((0..mixed.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .map(|(k, &h)| padded[n + LOWPASS_TAPS - 1 - k] * h)
                .sum()
        })
        .collect())
}

/// Real carrier-modulated fast-time signal of one frequency column.
///
/// The band is placed at intermediate frequency `2B` on a grid oversampled
/// by [`CARRIER_OVERSAMPLE`], so the sample rate is `8B`.
pub fn carrier_signal(column: &[Complex64]) -> Vec<f64> {
    let n = column.len();
    let len = n * CARRIER_OVERSAMPLE;
    let mut spectrum = vec![Complex64::default(); len];
    spectrum[2 * n..3 * n].copy_from_slice(column);
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(len).process(&mut spectrum);
    spectrum.iter().map(|z| z.re / len as f64).collect()
}

/// Recovers the baseband range profile from [`carrier_signal`] output.
fn demodulate_carrier(signal: &[f64], n_freq: usize, bandwidth: f64) -> Result<Vec<Complex64>> {
    let fs = bandwidth * CARRIER_OVERSAMPLE as f64;
    let complex: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let base = demodulate(&complex, 2.0 * bandwidth, fs, 1.5 * bandwidth)?;
    // Factor 2 undoes the real part, the oversampling factor the longer IDFT.
    let gain = 2.0 * CARRIER_OVERSAMPLE as f64;
    Ok((0..n_freq)
        .map(|k| base[k * CARRIER_OVERSAMPLE] * gain)
        .collect())
}

/// Range profiles for the echo's configuration: direct inverse DFT, or the
/// carrier path (IDFT → real IF signal → mixing and low-pass) when
/// `carrier_sim` is set.
pub fn range_profiles(echo: &FrequencyEcho) -> Result<ComplexMatrix> {
    if !echo.config.carrier_sim {
        return Ok(ifft_range_profile(echo));
    }
    let (n_freq, n_slow) = echo.data.shape();
    let mut out = ComplexMatrix::zeros(n_freq, n_slow);
    for c in 0..n_slow {
        let column = echo.data.column(c);
        let rf = carrier_signal(&column);
        let profile = demodulate_carrier(&rf, n_freq, echo.config.bandwidth())?;
        out.set_column(c, &profile);
    }
    Ok(out)
}

/// Magnitude image of the range profiles.
pub fn build_rtm(profiles: &ComplexMatrix, radar: &RadarConfig) -> RangeTimeMap {
    RangeTimeMap {
        data: profiles.map(|z| z.norm()),
        range_res: radar.range_resolution(),
        prf: radar.prf,
    }
}

/// Sums complex range profiles over range into one slow-time series.
pub fn slow_time_series(profiles: &ComplexMatrix) -> Vec<Complex64> {
    let (rows, cols) = profiles.shape();
    let mut series = vec![Complex64::default(); cols];
    for r in 0..rows {
        for (s, v) in series.iter_mut().zip(profiles.row(r)) {
            *s += v;
        }
    }
    series
}

/// Centered STFT magnitude of a slow-time series.
pub fn stft_magnitude(series: &[Complex64], cfg: &StftConfig, prf: f64) -> Result<DopplerTimeMap> {
    cfg.validate()?;
    if series.len() < cfg.window_len {
        return Err(Error::InvalidArgument(format!(
            "slow-time series of {} samples is shorter than the {}-sample window",
            series.len(),
            cfg.window_len
        )));
    }
    let n = cfg.window_len;
    let frames = cfg.n_frames(series.len());
    let window = hamming(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let keep = cfg.n_doppler_keep;
    // After fftshift zero Doppler sits at index n/2; keep `keep` bins around it.
    let first = n / 2 - keep / 2;
    let mut data = Matrix::zeros(keep, frames);
    let mut buf = vec![Complex64::default(); n];
    for f in 0..frames {
        let start = f * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = series[start + i] * window[i];
        }
        fft.process(&mut buf);
        for j in 0..keep {
            let shifted = first + j;
            let bin = (shifted + n - n / 2) % n;
            data[(j, f)] = buf[bin].norm();
        }
    }
    Ok(DopplerTimeMap {
        data,
        doppler_res: prf / n as f64,
        hop: cfg.hop,
    })
}

/// Doppler-time map: range-summed slow-time series through the STFT.
pub fn build_dtm(profiles: &ComplexMatrix, cfg: &StftConfig, prf: f64) -> Result<DopplerTimeMap> {
    stft_magnitude(&slow_time_series(profiles), cfg, prf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar_sim::{clean_echo, ScattererTrack, WallModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn argmax(values: &[f64]) -> usize {
        values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    #[test]
    fn all_ones_column_is_a_delta_at_zero() {
        let input = ComplexMatrix::from_fn(16, 1, |_, _| Complex64::new(1.0, 0.0));
        let out = ifft_columns(&input);
        assert!((out[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for r in 1..16 {
            assert!(out[(r, 0)].norm() < 1e-15);
        }
    }

    #[test]
    fn shifted_phase_ramp_is_a_delta_at_k0() {
        let n = 128;
        let k0 = 37;
        let input = ComplexMatrix::from_fn(n, 1, |m, _| {
            Complex64::from_polar(1.0, -2.0 * PI * (m * k0) as f64 / n as f64)
        });
        let out = ifft_columns(&input);
        for r in 0..n {
            let expected = if r == k0 { 1.0 } else { 0.0 };
            let got = out[(r, 0)].norm();
            assert!((got - expected).abs() < 1e-12, "bin {r}: {got}");
        }
        let input = ComplexMatrix::from_fn(n, 1, |m, _| {
            Complex64::from_polar(1.0, 2.0 * PI * (m * k0) as f64 / n as f64)
        });
        let out = ifft_columns(&input);
        assert!((out[(n - k0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_power_of_two_lengths_round_trip() {
        for rows in [7, 100, 127, 128, 129] {
            let x = random_matrix(rows, 3, rows as u64);
            let back = fft_columns(&ifft_columns(&x));
            for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn static_scatterer_peaks_at_its_range_bin() {
        let radar = RadarConfig::default();
        let track = ScattererTrack::stationary(3.0, 1.0, radar.n_slow());
        let echo = clean_echo(&track, &radar, &WallModel::none()).unwrap();
        let rtm = build_rtm(&ifft_range_profile(&echo), &radar);
        for c in [0, 500, 1023] {
            assert_eq!(argmax(&rtm.data.column(c)), 40);
        }
    }

    #[test]
    fn wall_shifts_the_apparent_range() {
        let radar = RadarConfig::default();
        let wall = WallModel::default();
        let track = ScattererTrack::stationary(3.0, 1.0, radar.n_slow());
        let free = build_rtm(
            &ifft_range_profile(&clean_echo(&track, &radar, &WallModel::none()).unwrap()),
            &radar,
        );
        let walled = build_rtm(&ifft_range_profile(&clean_echo(&track, &radar, &wall).unwrap()), &radar);
        let shift = (wall.excess_path() / radar.range_resolution()).round() as usize;
        assert_eq!(shift, 2);
        assert_eq!(argmax(&walled.data.column(0)), argmax(&free.data.column(0)) + shift);
    }

    #[test]
    fn rtm_is_elementwise_magnitude() {
        let radar = RadarConfig::default();
        let p = ComplexMatrix::from_fn(2, 2, |r, c| {
            if r == 0 && c == 1 {
                Complex64::new(3.0, 4.0)
            } else {
                Complex64::default()
            }
        });
        let rtm = build_rtm(&p, &radar);
        assert_eq!(rtm.data[(0, 1)], 5.0);
        assert_eq!(rtm.data[(1, 1)], 0.0);
        assert_eq!(rtm.prf, 256.0);
    }

    #[test]
    fn moving_scatterer_is_tracked_in_the_rtm() {
        let radar = RadarConfig::default();
        let n = radar.n_slow();
        let positions = Matrix::from_fn(1, n, |_, c| 2.0 + 3.0 * c as f64 / n as f64);
        let track = ScattererTrack {
            positions: positions.clone(),
            amplitudes: vec![1.0],
            height_scale: 1.8,
        };
        let echo = clean_echo(&track, &radar, &WallModel::none()).unwrap();
        let rtm = build_rtm(&ifft_range_profile(&echo), &radar);
        for c in (0..n).step_by(37) {
            let expected = (positions[(0, c)] / radar.range_resolution()).round() as i64;
            let got = argmax(&rtm.data.column(c)) as i64;
            assert!((got - expected).abs() <= 1, "frame {c}: {got} vs {expected}");
        }
    }

    #[test]
    fn frame_count_follows_geometry() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.n_frames(1024), 65);
        let dtm = stft_magnitude(&vec![Complex64::new(1.0, 0.0); 1024], &cfg, 256.0).unwrap();
        assert_eq!(dtm.data.shape(), (64, 65));
        assert_eq!(dtm.doppler_res, 2.0);
    }

    #[test]
    fn zero_series_gives_zero_dtm() {
        let profiles = ComplexMatrix::zeros(8, 256);
        let dtm = build_dtm(&profiles, &StftConfig::default(), 256.0).unwrap();
        assert!(dtm.data.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_series_is_rejected() {
        let profiles = ComplexMatrix::zeros(8, 100);
        assert!(build_dtm(&profiles, &StftConfig::default(), 256.0).is_err());
    }

    #[test]
    fn real_sinusoid_gives_symmetric_ridges() {
        let prf = 256.0;
        let f0 = 20.0;
        let series: Vec<Complex64> = (0..1024)
            .map(|n| Complex64::new((2.0 * PI * f0 * n as f64 / prf).cos(), 0.0))
            .collect();
        let dtm = stft_magnitude(&series, &StftConfig::default(), prf).unwrap();
        let center = 32;
        let offset = (f0 / dtm.doppler_res) as usize;
        for f in 0..dtm.data.cols() {
            let col = dtm.data.column(f);
            assert!((col[center + offset] - col[center - offset]).abs() < 1e-9);
            let peak = argmax(&col);
            assert!(peak == center + offset || peak == center - offset);
        }
    }

    #[test]
    fn demodulate_rejects_bad_cutoff() {
        let s = vec![Complex64::new(1.0, 0.0); 10];
        assert!(demodulate(&s, 10.0, 100.0, 0.0).is_err());
        assert!(demodulate(&s, 10.0, 100.0, 50.0).is_err());
        assert!(demodulate(&s, 10.0, 100.0, 20.0).is_ok());
    }

    #[test]
    fn demodulate_zero_is_zero() {
        let out = demodulate(&vec![Complex64::default(); 300], 100.0, 1000.0, 50.0).unwrap();
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn perfect_mixdown_gives_constant() {
        let fs = 1000.0;
        let fc = 120.0;
        let signal: Vec<Complex64> = (0..600)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * fc * n as f64 / fs))
            .collect();
        let out = demodulate(&signal, fc, fs, 50.0).unwrap();
        assert_eq!(out.len(), signal.len());
        for z in &out {
            assert!((z - Complex64::new(1.0, 0.0)).norm() <= 1e-3);
        }
    }

    #[test]
    fn out_of_band_tone_is_attenuated() {
        let fs = 1000.0;
        let fc = 120.0;
        let cutoff = 50.0;
        let f_off = fc + 2.0 * cutoff;
        let taps = lowpass_taps(cutoff, fs);
        let designed = fir_response(&taps, 2.0 * cutoff, fs).norm();
        assert!(designed < 1e-2, "designed stopband {designed}");
        let signal: Vec<Complex64> = (0..1000)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * f_off * n as f64 / fs))
            .collect();
        let out = demodulate(&signal, fc, fs, cutoff).unwrap();
        for z in &out[LOWPASS_TAPS..out.len() - LOWPASS_TAPS] {
            assert!(z.norm() <= designed + 1e-9);
        }
    }

    #[test]
    fn carrier_path_matches_baseband_path() {
        let radar = RadarConfig {
            duration: 0.25,
            ..RadarConfig::default()
        };
        let track = ScattererTrack::stationary(3.0, 1.0, radar.n_slow());
        let echo = clean_echo(&track, &radar, &WallModel::default()).unwrap();
        let base = range_profiles(&echo).unwrap();
        let carrier_echo = FrequencyEcho {
            config: RadarConfig {
                carrier_sim: true,
                ..radar
            },
            ..echo
        };
        let carrier = range_profiles(&carrier_echo).unwrap();
        let peak = base.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for c in 0..radar.n_slow() {
            for r in 8..radar.n_freq - 8 {
                let err = (carrier[(r, c)] - base[(r, c)]).norm();
                assert!(err < 1e-2 * peak, "({r},{c}) err {err}");
            }
        }
    }
}
