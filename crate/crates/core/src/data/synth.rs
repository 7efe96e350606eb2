//! Deterministic synthetic wrist data.
//!
//! Falls are an impact spike in the accelerometer, a rotation burst in the
//! gyroscope, a change of gravity direction (the wearer ends up lying) and a
//! monotone pressure rise of about one metre of altitude loss. Non-fall
//! windows are low-amplitude periodic arm motion (walking, gesturing) with a
//! slight pressure drift.
//!
//! Without noise, a fall's peak acceleration magnitude is at least 2.5 g and
//! a non-fall's is at most 1.9 g, so a single threshold separates the classes.
//!
//! Units: acceleration in g, angular rate in rad/s, pressure as deviation in
//! hPa. Noise is Gaussian with standard deviation `noise_std` for the
//! accelerometer and gyroscope and `noise_std / 10` for the barometer.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sensor::{SensorKind, SensorSet};
use super::window::WindowedDataset;
use crate::error::Result;
use crate::tensor::Matrix2D;

/// Noise level at which the task stops being trivial but a small LSTM on all
/// sensors still exceeds 90 % test accuracy.
pub const HARD_NOISE_STD: f64 = 1.0;

/// Subject ids are assigned round-robin so subject-holdout splits work.
pub const SYNTH_SUBJECTS: u32 = 15;

/// Lower bound on a fall's peak acceleration magnitude (noise-free).
pub const FALL_MIN_PEAK_G: f64 = 2.5;
/// Upper bound on a non-fall's peak acceleration magnitude (noise-free).
pub const ADL_MAX_PEAK_G: f64 = 1.9;

const BARO_NOISE_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub window_len: usize,
    pub sensor_set: SensorSet,
    pub seed: u64,
    pub noise_std: f64,
    /// Sensors whose signal depends on the class. The others carry the same
    /// class-independent motion for falls and non-falls.
    pub signal_sensors: SensorSet,
}

impl SynthConfig {
    pub fn new(n_per_class: usize, window_len: usize, sensor_set: SensorSet, seed: u64, noise_std: f64) -> Self {
        Self {
            n_per_class,
            window_len,
            sensor_set,
            seed,
            noise_std,
            signal_sensors: SensorSet::FULL,
        }
    }

    pub fn with_signal_sensors(mut self, sensors: SensorSet) -> Self {
        self.signal_sensors = sensors;
        self
    }

    /// Falls occupy the first `n_per_class` windows, non-falls the rest.
    pub fn generate(&self) -> Result<WindowedDataset> {
        let t = self.window_len.max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_std.max(0.0)).expect("finite std");
        let mut windows = Vec::with_capacity(2 * self.n_per_class);
        let mut labels = Vec::with_capacity(2 * self.n_per_class);
        let mut subjects = Vec::with_capacity(2 * self.n_per_class);
        for i in 0..2 * self.n_per_class {
            let fall = i < self.n_per_class;
            let mut full: Channels = Default::default();
            let (informative, background) = if fall {
                (fall_window(&mut rng, t), adl_periodic(&mut rng, t))
            } else {
                (adl_periodic(&mut rng, t), adl_periodic(&mut rng, t))
            };
            for kind in SensorKind::ALL {
                let src = if self.signal_sensors.contains(kind) {
                    &informative
                } else {
                    &background
                };
                for c in SensorSet::single(kind).full_channel_indices() {
                    full[c] = src[c].clone();
                }
            }
            if self.noise_std > 0.0 {
                for (c, row) in full.iter_mut().enumerate() {
                    let scale = if c == 6 { BARO_NOISE_SCALE } else { 1.0 };
                    row.iter_mut().for_each(|v| *v += scale * noise.sample(&mut rng));
                }
            }
            let data: Vec<f64> = self
                .sensor_set
                .full_channel_indices()
                .into_iter()
                .flat_map(|c| full[c].iter().copied())
                .collect();
            windows.push(Matrix2D::from_vec(self.sensor_set.channel_count(), t, data)?);
            labels.push(u8::from(fall));
            subjects.push(i as u32 % SYNTH_SUBJECTS + 1);
        }
        WindowedDataset::new(self.sensor_set, t, windows, labels, subjects)
    }
}

/// Generates `n_per_class` falls and as many non-falls with all sensors
/// carrying signal.
pub fn synth_generate(
    n_per_class: usize,
    window_len: usize,
    sensor_set: SensorSet,
    seed: u64,
    noise_std: f64,
) -> Result<WindowedDataset> {
    SynthConfig::new(n_per_class, window_len, sensor_set, seed, noise_std).generate()
}

type Channels = [Vec<f64>; 7];

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = norm(v);
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Gravity direction of a wrist held roughly level.
fn upright_gravity(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let v = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0];
    let n = norm(v);
    v.map(|x| x / n)
}

fn bump(t: f64, centre: f64, width: f64) -> f64 {
    (-((t - centre) / width).powi(2)).exp()
}

fn ramp(t: f64, centre: f64, width: f64) -> f64 {
    1.0 / (1.0 + (-(t - centre) / width).exp())
}

fn impact_time(rng: &mut ChaCha8Rng, t: usize) -> usize {
    let lo = t / 4;
    let hi = (3 * t / 4).max(lo);
    rng.random_range(lo..=hi).min(t - 1)
}

fn empty(t: usize) -> Channels {
    std::array::from_fn(|_| vec![0.0; t])
}

fn fall_window(rng: &mut ChaCha8Rng, t: usize) -> Channels {
    let mut ch = empty(t);
    let t0 = impact_time(rng, t);
    let before = upright_gravity(rng);
    let mut after = unit_vector(rng);
    // Lying down: gravity swings towards the forearm plane.
    after[2] *= 0.3;
    let n = norm(after);
    after = after.map(|x| x / n);
    let spike = rng.random_range(3.7..5.0);
    let dir = unit_vector(rng);
    let spin = rng.random_range(2.0..4.0);
    let axis = unit_vector(rng);
    let base = rng.random_range(-0.05..0.05);
    let step = rng.random_range(0.08..0.15);
    let wobble = rng.random_range(0.0..0.1);

    for i in 0..t {
        let ti = i as f64;
        // Orientation is still upright at the instant of impact.
        let g = if i <= t0 { before } else { after };
        let shock = if i == t0 {
            spike
        } else if i + 1 == t0 || i == t0 + 1 {
            0.35 * spike
        } else {
            0.0
        };
        for a in 0..3 {
            ch[a][i] = g[a] + shock * dir[a] + wobble * (0.9 * ti + a as f64).sin();
            ch[3 + a][i] = spin * axis[a] * bump(ti, t0 as f64, 1.5);
        }
        ch[6][i] = base + step * ramp(ti, t0 as f64, 0.7);
    }
    ch
}

fn adl_periodic(rng: &mut ChaCha8Rng, t: usize) -> Channels {
    let mut ch = empty(t);
    let g = upright_gravity(rng);
    let amp = rng.random_range(0.1..0.5);
    let freq = rng.random_range(0.05..0.25);
    let spin = rng.random_range(0.1..0.8);
    let base = rng.random_range(-0.05..0.05);
    let drift = rng.random_range(-0.02..0.02);
    let phase: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
    for i in 0..t {
        let ti = i as f64;
        for a in 0..3 {
            ch[a][i] = g[a] + amp * (2.0 * PI * freq * ti + phase[a]).sin();
            ch[3 + a][i] = spin * (2.0 * PI * freq * ti + phase[3 + a]).sin();
        }
        ch[6][i] = base + drift * ti / t as f64;
    }
    ch
}

/// Largest acceleration magnitude in a window laid out for `sensors`.
pub fn peak_accel_magnitude(window: &Matrix2D, sensors: SensorSet) -> Option<f64> {
    if !sensors.contains(SensorKind::Accelerometer) {
        return None;
    }
    // The accelerometer is always the first three rows when present.
    (0..window.cols())
        .map(|i| norm([window.get(0, i), window.get(1, i), window.get(2, i)]))
        .reduce(f64::max)
}
