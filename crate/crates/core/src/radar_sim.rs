//! Synthetic stepped-frequency through-the-wall echoes.
//!
//! A person is a set of six point scatterers (torso, head, two arms, two
//! legs) moving radially in front of the radar. Each activity class has an
//! analytic kinematic template; transition classes blend two templates with a
//! smooth step. Per-sample randomness (standoff, speed, rates, phases, event
//! time) comes from a seeded ChaCha stream so every track is reproducible.
//!
//! The wall is a single lossy dielectric slab crossed twice: it attenuates by
//! `exp(-loss·d)` one way and adds an extra one-way path of `d(√εr − 1)`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::matrix::ComplexMatrix;
use crate::{Error, Matrix, Result, SPEED_OF_LIGHT};

/// Mean standoff between radar and torso, m.
pub const DEFAULT_STANDOFF: f64 = 4.0;

/// Reflectivity of torso, head, left arm, right arm, left leg, right leg.
pub const SCATTERER_AMPLITUDES: [f64; 6] = [1.0, 0.4, 0.25, 0.25, 0.25, 0.25];

pub const TORSO: usize = 0;
pub const HEAD: usize = 1;
pub const ARM_L: usize = 2;
pub const ARM_R: usize = 3;
pub const LEG_L: usize = 4;
pub const LEG_R: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub n_freq: usize,
    pub prf: f64,
    pub duration: f64,
    pub carrier_sim: bool,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            f_min: 0.5e9,
            f_max: 2.5e9,
            n_freq: 128,
            prf: 256.0,
            duration: 4.0,
            carrier_sim: false,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_max > self.f_min) {
            return Err(Error::InvalidArgument(format!(
                "need f_max > f_min > 0, got f_min={} f_max={}",
                self.f_min, self.f_max
            )));
        }
        if self.n_freq < 2 {
            return Err(Error::InvalidArgument("n_freq must be at least 2".into()));
        }
        let slow = self.prf * self.duration;
        if !(slow.is_finite() && slow.fract() == 0.0 && slow >= 64.0) {
            return Err(Error::InvalidArgument(format!(
                "prf·duration must be an integer ≥ 64, got {slow}"
            )));
        }
        Ok(())
    }

    /// Number of slow-time frames, `prf·duration`.
    pub fn n_slow(&self) -> usize {
        (self.prf * self.duration).round() as usize
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_max - self.f_min
    }

    /// Frequency step. The grid is `f_min + m·Δf` for `m < n_freq`, so the
    /// synthesized band is `[f_min, f_max)`.
    pub fn freq_step(&self) -> f64 {
        self.bandwidth() / self.n_freq as f64
    }

    pub fn frequency(&self, m: usize) -> f64 {
        self.f_min + m as f64 * self.freq_step()
    }

    /// Range bin size of the inverse DFT over the frequency axis, `c / 2B`.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.n_freq as f64 * self.freq_step())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallModel {
    pub thickness: f64,
    pub rel_permittivity: f64,
    pub loss_factor: f64,
}

impl Default for WallModel {
    fn default() -> Self {
        Self {
            thickness: 0.12,
            rel_permittivity: 6.0,
            loss_factor: 5.0,
        }
    }
}

impl WallModel {
    pub fn none() -> Self {
        Self {
            thickness: 0.0,
            rel_permittivity: 1.0,
            loss_factor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.thickness >= 0.0 && self.rel_permittivity >= 1.0 && self.loss_factor >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid wall model {self:?}")));
        }
        Ok(())
    }

    /// Extra one-way path length through the slab relative to air, m.
    pub fn excess_path(&self) -> f64 {
        self.thickness * (self.rel_permittivity.sqrt() - 1.0)
    }
}

/// The twelve activity classes, with their integer label codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ActivityKind {
    Empty = 0,
    Punching = 1,
    Kicking = 2,
    Grabbing = 3,
    SittingDown = 4,
    StandingUp = 5,
    Rotating = 6,
    Walking = 7,
    SittingToWalking = 8,
    WalkingToSitting = 9,
    FallingToWalking = 10,
    WalkingToFalling = 11,
}

impl ActivityKind {
    pub const COUNT: usize = 12;

    pub const ALL: [ActivityKind; 12] = [
        ActivityKind::Empty,
        ActivityKind::Punching,
        ActivityKind::Kicking,
        ActivityKind::Grabbing,
        ActivityKind::SittingDown,
        ActivityKind::StandingUp,
        ActivityKind::Rotating,
        ActivityKind::Walking,
        ActivityKind::SittingToWalking,
        ActivityKind::WalkingToSitting,
        ActivityKind::FallingToWalking,
        ActivityKind::WalkingToFalling,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or(Error::InvalidActivity(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityKind::Empty => "Empty",
            ActivityKind::Punching => "Punching",
            ActivityKind::Kicking => "Kicking",
            ActivityKind::Grabbing => "Grabbing",
            ActivityKind::SittingDown => "Sitting Down",
            ActivityKind::StandingUp => "Standing Up",
            ActivityKind::Rotating => "Rotating",
            ActivityKind::Walking => "Walking",
            ActivityKind::SittingToWalking => "Sitting to Walking",
            ActivityKind::WalkingToSitting => "Walking to Sitting",
            ActivityKind::FallingToWalking => "Falling to Walking",
            ActivityKind::WalkingToFalling => "Walking to Falling",
        }
    }
}

impl fmt::Display for ActivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Radial range of every scatterer at every slow-time frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererTrack {
    /// `n_scatterers × n_slow`, metres from the radar.
    pub positions: Matrix,
    pub amplitudes: Vec<f64>,
    pub height_scale: f64,
}

impl ScattererTrack {
    pub fn n_scatterers(&self) -> usize {
        self.positions.rows()
    }

    pub fn n_slow(&self) -> usize {
        self.positions.cols()
    }

    /// Track of a single fixed scatterer, mostly useful for calibration.
    pub fn stationary(range: f64, amplitude: f64, n_slow: usize) -> Self {
        Self {
            positions: Matrix::from_fn(1, n_slow, |_, _| range),
            amplitudes: vec![amplitude],
            height_scale: 1.8,
        }
    }

    /// Union of two scatterer sets observed over the same frames.
    pub fn merged(&self, other: &ScattererTrack) -> Result<Self> {
        if self.n_slow() != other.n_slow() {
            return Err(Error::dims(self.n_slow(), other.n_slow()));
        }
        let n = self.n_slow();
        let mut data = self.positions.as_slice().to_vec();
        data.extend_from_slice(other.positions.as_slice());
        let rows = self.n_scatterers() + other.n_scatterers();
        Ok(Self {
            positions: Matrix::from_vec(rows, n, data)?,
            amplitudes: [self.amplitudes.as_slice(), other.amplitudes.as_slice()].concat(),
            height_scale: self.height_scale,
        })
    }
}

/// Complex frequency × slow-time echo.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEcho {
    pub data: ComplexMatrix,
    pub config: RadarConfig,
}

/// Per-sample random draws shared by every template.
#[derive(Debug, Clone, Copy)]
struct Variation {
    standoff: f64,
    direction: f64,
    speed: f64,
    rate: f64,
    phase: f64,
    event_time: f64,
    gain: f64,
    sway_rate: f64,
    sway_phase: f64,
}

impl Variation {
    fn draw(rng: &mut ChaCha8Rng, duration: f64) -> Self {
        Self {
            standoff: DEFAULT_STANDOFF + rng.gen_range(-0.5..0.5),
            direction: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            speed: rng.gen_range(0.5..0.9),
            rate: rng.gen_range(0.85..1.15),
            phase: rng.gen_range(0.0..1.0),
            event_time: duration * rng.gen_range(0.35..0.65),
            gain: rng.gen_range(0.85..1.15),
            sway_rate: rng.gen_range(0.2..0.4),
            sway_phase: rng.gen_range(0.0..1.0),
        }
    }
}

/// One-sided jab profile: zero half the cycle, a smooth bump the other half.
fn jab(cycles: f64) -> f64 {
    let s = (2.0 * PI * cycles).sin();
    if s > 0.0 {
        s * s
    } else {
        0.0
    }
}

/// Smooth 0→1 step centred at `center` with the given width.
fn smoothstep(t: f64, center: f64, width: f64) -> f64 {
    let u = ((t - (center - width / 2.0)) / width).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// A body configuration: torso base range (m, height independent) and the
/// per-part offsets in units of body height.
#[derive(Debug, Clone, Copy)]
struct Pose {
    base: f64,
    rel: [f64; 6],
}

impl Pose {
    fn lerp(a: Pose, b: Pose, w: f64) -> Pose {
        let mut rel = [0.0; 6];
        for k in 0..6 {
            rel[k] = (1.0 - w) * a.rel[k] + w * b.rel[k];
        }
        Pose {
            base: (1.0 - w) * a.base + w * b.base,
            rel,
        }
    }
}

const STANDING: [f64; 6] = [0.0, -0.02, -0.05, -0.05, 0.0, 0.0];
const SEATED: [f64; 6] = [0.15, 0.12, -0.15, -0.15, -0.3, -0.3];
const LYING: [f64; 6] = [-0.3, -0.55, -0.45, -0.45, 0.25, 0.25];

struct Kinematics {
    v: Variation,
}

impl Kinematics {
    fn sway(&self, t: f64) -> f64 {
        0.01 * (2.0 * PI * (self.v.sway_rate * t + self.v.sway_phase)).sin()
    }

    fn idle(&self, t: f64, rel: [f64; 6]) -> Pose {
        Pose {
            base: self.v.standoff + self.sway(t),
            rel,
        }
    }

    fn punching(&self, t: f64) -> Pose {
        let g = self.v.gain;
        let f = 1.1 * self.v.rate;
        let mut p = self.idle(t, STANDING);
        p.rel[ARM_L] -= 0.35 * g * jab(f * t + self.v.phase);
        p.rel[ARM_R] -= 0.35 * g * jab(f * t + self.v.phase + 0.5);
        p.rel[TORSO] -= 0.03 * g * (2.0 * PI * 2.0 * f * t).sin().abs();
        p
    }

    fn kicking(&self, t: f64) -> Pose {
        let g = self.v.gain;
        let f = 0.7 * self.v.rate;
        let left = jab(f * t + self.v.phase);
        let right = jab(f * t + self.v.phase + 0.5);
        let mut p = self.idle(t, STANDING);
        p.rel[LEG_L] -= 0.45 * g * left;
        p.rel[LEG_R] -= 0.45 * g * right;
        p.rel[ARM_L] += 0.1 * g * left;
        p.rel[ARM_R] += 0.1 * g * right;
        p.rel[TORSO] += 0.05 * g * (left + right);
        p
    }

    fn grabbing(&self, t: f64) -> Pose {
        let g = self.v.gain;
        let f = 0.5 * self.v.rate;
        let reach = 0.5 * (1.0 - (2.0 * PI * (f * t + self.v.phase)).cos());
        let mut p = self.idle(t, STANDING);
        p.rel[ARM_L] -= 0.5 * g * reach;
        p.rel[ARM_R] -= 0.5 * g * reach;
        p.rel[TORSO] -= 0.08 * g * reach;
        p.rel[HEAD] -= 0.12 * g * reach;
        p
    }

    fn rotating(&self, t: f64) -> Pose {
        let g = self.v.gain;
        let s = (2.0 * PI * (0.4 * self.v.rate * t + self.v.phase)).sin();
        let mut p = self.idle(t, STANDING);
        p.rel[ARM_L] += 0.22 * g * s;
        p.rel[ARM_R] -= 0.22 * g * s;
        p.rel[LEG_L] += 0.08 * g * s;
        p.rel[LEG_R] -= 0.08 * g * s;
        p.rel[HEAD] += 0.05 * g * s;
        p
    }

    /// Walking whose torso passes the standoff point at `anchor`.
    fn walking(&self, t: f64, anchor: f64) -> Pose {
        let g = self.v.gain;
        let f = 0.9 * self.v.rate;
        let swing = (2.0 * PI * (f * t + self.v.phase)).sin();
        let bounce = (2.0 * PI * (2.0 * f * t + self.v.phase)).cos();
        let mut rel = STANDING;
        rel[ARM_L] += 0.25 * g * swing;
        rel[ARM_R] -= 0.25 * g * swing;
        rel[LEG_L] -= 0.35 * g * swing;
        rel[LEG_R] += 0.35 * g * swing;
        rel[HEAD] += 0.02 * g * bounce;
        Pose {
            base: self.v.standoff + self.v.direction * self.v.speed * (t - anchor),
            rel,
        }
    }

    fn sitting_down(&self, t: f64) -> Pose {
        let w = smoothstep(t, self.v.event_time, 1.2 / self.v.rate);
        Pose::lerp(self.idle(t, STANDING), self.idle(t, SEATED), w)
    }

    fn standing_up(&self, t: f64) -> Pose {
        let w = smoothstep(t, self.v.event_time, 1.2 / self.v.rate);
        Pose::lerp(self.idle(t, SEATED), self.idle(t, STANDING), w)
    }

    fn fall(&self, t: f64, start: f64) -> Pose {
        // Falls forward over ~0.8 s; the quadratic ramp mimics free fall.
        let u = ((t - start) / (0.8 / self.v.rate)).clamp(0.0, 1.0);
        Pose::lerp(self.idle(t, STANDING), self.idle(t, LYING), u * u)
    }

    fn get_up(&self, t: f64, end: f64) -> Pose {
        let u = ((t - (end - 1.0 / self.v.rate)) * self.v.rate).clamp(0.0, 1.0);
        Pose::lerp(self.idle(t, LYING), self.idle(t, STANDING), u)
    }

    fn pose(&self, activity: ActivityKind, t: f64, duration: f64) -> Pose {
        let te = self.v.event_time;
        let blend = |a: Pose, b: Pose| Pose::lerp(a, b, smoothstep(t, te, 1.0));
        match activity {
            ActivityKind::Empty => self.idle(t, [0.0; 6]),
            ActivityKind::Punching => self.punching(t),
            ActivityKind::Kicking => self.kicking(t),
            ActivityKind::Grabbing => self.grabbing(t),
            ActivityKind::SittingDown => self.sitting_down(t),
            ActivityKind::StandingUp => self.standing_up(t),
            ActivityKind::Rotating => self.rotating(t),
            ActivityKind::Walking => self.walking(t, duration / 2.0),
            ActivityKind::SittingToWalking => {
                let walk = self.walking(t, te);
                let walk = Pose {
                    base: if t < te { self.v.standoff } else { walk.base },
                    ..walk
                };
                blend(self.idle(t, SEATED), walk)
            }
            ActivityKind::WalkingToSitting => {
                let walk = self.walking(t, te);
                blend(walk, self.idle(t, SEATED))
            }
            ActivityKind::FallingToWalking => {
                let walk = self.walking(t, te);
                let walk = Pose {
                    base: if t < te { self.v.standoff } else { walk.base },
                    ..walk
                };
                blend(self.get_up(t, te), walk)
            }
            ActivityKind::WalkingToFalling => {
                let walk = self.walking(t, te);
                let fallen = self.fall(t, te);
                blend(walk, Pose { base: self.v.standoff, ..fallen })
            }
        }
    }
}

/// Builds the scatterer ranges for one activity instance.
///
/// Offsets of every body part relative to the torso scale linearly with
/// `height_scale`; the torso path itself does not.
pub fn synth_trajectory(
    activity: ActivityKind,
    height_scale: f64,
    radar: &RadarConfig,
    seed: u64,
) -> Result<ScattererTrack> {
    radar.validate()?;
    if !(1.4..=2.0).contains(&height_scale) {
        return Err(Error::InvalidArgument(format!(
            "height_scale {height_scale} outside [1.4, 2.0]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kin = Kinematics {
        v: Variation::draw(&mut rng, radar.duration),
    };
    let n_slow = radar.n_slow();
    let mut positions = Matrix::zeros(6, n_slow);
    for n in 0..n_slow {
        let t = n as f64 / radar.prf;
        let pose = kin.pose(activity, t, radar.duration);
        for k in 0..6 {
            positions[(k, n)] = pose.base + height_scale * pose.rel[k];
        }
    }
    let amplitudes = if activity == ActivityKind::Empty {
        vec![0.0; 6]
    } else {
        SCATTERER_AMPLITUDES.to_vec()
    };
    Ok(ScattererTrack {
        positions,
        amplitudes,
        height_scale,
    })
}

/// One-way transmission coefficient of the wall slab at frequency `f`.
pub fn wall_transmission(f: f64, wall: &WallModel) -> Complex64 {
    if wall.thickness == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let magnitude = (-wall.loss_factor * wall.thickness).exp();
    let phase = -2.0 * PI * f * wall.excess_path() / SPEED_OF_LIGHT;
    Complex64::from_polar(magnitude, phase)
}

/// Mean power of a unit torso return seen through the wall; sets the noise
/// floor of scenes with nothing in them.
fn reference_power(radar: &RadarConfig, wall: &WallModel) -> f64 {
    let n = radar.n_freq;
    (0..n)
        .map(|m| wall_transmission(radar.frequency(m), wall).norm_sqr().powi(2))
        .sum::<f64>()
        / n as f64
}

/// Noise-free stepped-frequency response of the track.
pub fn clean_echo(track: &ScattererTrack, radar: &RadarConfig, wall: &WallModel) -> Result<FrequencyEcho> {
    radar.validate()?;
    wall.validate()?;
    let n_slow = radar.n_slow();
    if track.n_slow() != n_slow {
        return Err(Error::dims(format!("{n_slow} slow-time frames"), track.n_slow()));
    }
    if track.amplitudes.len() != track.n_scatterers() {
        return Err(Error::dims(track.n_scatterers(), track.amplitudes.len()));
    }
    let n_freq = radar.n_freq;
    let two_way: Vec<Complex64> = (0..n_freq)
        .map(|m| {
            let t = wall_transmission(radar.frequency(m), wall);
            t * t
        })
        .collect();
    let mut data = ComplexMatrix::zeros(n_freq, n_slow);
    let k0 = -4.0 * PI / SPEED_OF_LIGHT;
    for (k, &amp) in track.amplitudes.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        for n in 0..n_slow {
            let r = track.positions[(k, n)];
            // exp(-j4π f_m R / c) as a phasor recurrence over m.
            let mut phasor = Complex64::from_polar(amp, k0 * radar.f_min * r);
            let step = Complex64::from_polar(1.0, k0 * radar.freq_step() * r);
            for (m, t2) in two_way.iter().enumerate() {
                data[(m, n)] += t2 * phasor;
                phasor *= step;
            }
        }
    }
    Ok(FrequencyEcho {
        data,
        config: *radar,
    })
}

/// Simulated echo with complex white noise.
///
/// `snr_db` is relative to the mean signal power; scenes without signal use
/// the noise floor of a bare torso behind the wall. A non-finite `snr_db`
/// disables noise.
pub fn simulate_echo(
    track: &ScattererTrack,
    radar: &RadarConfig,
    wall: &WallModel,
    snr_db: f64,
    seed: u64,
) -> Result<FrequencyEcho> {
    let mut echo = clean_echo(track, radar, wall)?;
    if !snr_db.is_finite() {
        return Ok(echo);
    }
    let data = echo.data.as_mut_slice();
    let signal_power = data.iter().map(|z| z.norm_sqr()).sum::<f64>() / data.len() as f64;
    let reference = if signal_power > 0.0 {
        signal_power
    } else {
        reference_power(radar, wall)
    };
    let noise_power = reference / 10f64.powf(snr_db / 10.0);
    let normal = Normal::new(0.0, (noise_power / 2.0).sqrt())
        .map_err(|e| Error::Numeric(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for z in data.iter_mut() {
        let re = normal.sample(&mut rng);
        let im = normal.sample(&mut rng);
        *z += Complex64::new(re, im);
    }
    Ok(echo)
}
