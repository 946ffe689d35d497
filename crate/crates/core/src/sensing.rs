//! IMU measurement model and the low-pass / complementary filtering chain.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::State;
use crate::signal::Signal;

/// Seedable noise source for every simulated sensor stream.
pub type SensorRng = ChaCha8Rng;

pub fn sensor_rng(seed: u64) -> SensorRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// rad/s per axis
    pub gyro_bias: [f64; 3],
    /// rad/s
    pub gyro_noise_std: f64,
    /// m/s² per axis
    pub accel_bias: [f64; 3],
    pub accel_noise_std: f64,
    pub lpf_cutoff_hz: f64,
    /// Weight on the integrated gyro path.
    pub cf_alpha: f64,
    pub sample_rate_hz: f64,
    /// Noise stream seed. The pipeline derives one per record from its own seed instead.
    pub rng_seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        // Noise levels are of the order of an MPU-6050 at this bandwidth.
        SensorConfig {
            gyro_bias: [0.0; 3],
            gyro_noise_std: 1.0e-3,
            accel_bias: [0.0; 3],
            accel_noise_std: 0.04,
            lpf_cutoff_hz: 42.0,
            cf_alpha: 0.98,
            sample_rate_hz: 250.0,
            rng_seed: 1,
        }
    }
}

impl SensorConfig {
    pub fn noiseless() -> Self {
        SensorConfig {
            gyro_noise_std: 0.0,
            accel_noise_std: 0.0,
            ..SensorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Config("sample_rate_hz must be positive".into()));
        }
        lowpass_coefficient(self.lpf_cutoff_hz, self.sample_rate_hz)?;
        if !(0.0..=1.0).contains(&self.cf_alpha) {
            return Err(Error::Config(format!("cf_alpha {} outside [0, 1]", self.cf_alpha)));
        }
        if !(self.gyro_noise_std >= 0.0 && self.accel_noise_std >= 0.0) {
            return Err(Error::Config("noise standard deviations must be >= 0".into()));
        }
        Ok(())
    }

    pub fn sample_time(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// rad/s, body axes
    pub gyro: [f64; 3],
    /// Specific force, m/s², body axes (reads `+g` on z at rest).
    pub accel: [f64; 3],
}

/// Body-from-world rotation applied to a world vector, ZYX Euler angles.
fn world_to_body(phi: f64, theta: f64, psi: f64, v: [f64; 3]) -> [f64; 3] {
    let (sphi, cphi) = phi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (spsi, cpsi) = psi.sin_cos();
    // columns of R = Rz(psi) Ry(theta) Rx(phi); body = Rᵀ v
    let r = [
        [cth * cpsi, sphi * sth * cpsi - cphi * spsi, cphi * sth * cpsi + sphi * spsi],
        [cth * spsi, sphi * sth * spsi + cphi * cpsi, cphi * sth * spsi - sphi * cpsi],
        [-sth, sphi * cth, cphi * cth],
    ];
    std::array::from_fn(|j| (0..3).map(|i| r[i][j] * v[i]).sum())
}

/// One IMU reading. `accel_world` is the body's linear acceleration in the
/// world frame (zero on a fixed-axis rig).
pub fn sample_imu(
    s: &State,
    accel_world: [f64; 3],
    gravity: f64,
    cfg: &SensorConfig,
    rng: &mut SensorRng,
) -> ImuSample {
    let gyro_noise = Normal::new(0.0, cfg.gyro_noise_std).expect("validated std");
    let accel_noise = Normal::new(0.0, cfg.accel_noise_std).expect("validated std");
    let rates = [s.p, s.q, s.r];
    let mut gyro = [0.0; 3];
    for i in 0..3 {
        gyro[i] = rates[i] + cfg.gyro_bias[i] + gyro_noise.sample(rng);
    }
    let f_world = [accel_world[0], accel_world[1], accel_world[2] + gravity];
    let f_body = world_to_body(s.phi, s.theta, s.psi, f_world);
    let mut accel = [0.0; 3];
    for i in 0..3 {
        accel[i] = f_body[i] + cfg.accel_bias[i] + accel_noise.sample(rng);
    }
    ImuSample { gyro, accel }
}

/// Pole of the first-order discrete low-pass, `exp(−2π f_c / f_s)`.
pub fn lowpass_coefficient(cutoff_hz: f64, sample_rate_hz: f64) -> Result<f64> {
    if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
        return Err(Error::Config(format!(
            "low-pass cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            sample_rate_hz / 2.0
        )));
    }
    Ok((-2.0 * std::f64::consts::PI * cutoff_hz / sample_rate_hz).exp())
}

/// Streaming first-order low-pass with unity DC gain.
#[derive(Debug, Clone, Copy)]
pub struct LowPass {
    pole: f64,
    state: Option<f64>,
}

impl LowPass {
    pub fn new(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        Ok(LowPass {
            pole: lowpass_coefficient(cutoff_hz, sample_rate_hz)?,
            state: None,
        })
    }

    /// The first sample initializes the filter state.
    pub fn step(&mut self, x: f64) -> f64 {
        let y = match self.state {
            None => x,
            Some(prev) => self.pole * prev + (1.0 - self.pole) * x,
        };
        self.state = Some(y);
        y
    }
}

pub fn lowpass(x: &Signal, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Signal> {
    let mut f = LowPass::new(cutoff_hz, sample_rate_hz)?;
    Ok(x.map(|v| f.step(v)))
}

pub fn complementary(gyro_rate: f64, accel_angle: f64, prev_angle: f64, alpha: f64, dt: f64) -> f64 {
    alpha * (prev_angle + gyro_rate * dt) + (1.0 - alpha) * accel_angle
}

/// Roll from the gravity direction in body axes.
pub fn accel_roll(accel: [f64; 3]) -> f64 {
    accel[1].atan2(accel[2])
}

/// Pitch from the gravity direction; singular near ±90°.
pub fn accel_pitch(accel: [f64; 3]) -> f64 {
    (-accel[0]).atan2((accel[1] * accel[1] + accel[2] * accel[2]).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterVerdict {
    pub cutoff_ok: bool,
    pub sampling_ok: bool,
}

impl FilterVerdict {
    pub fn pass(&self) -> bool {
        self.cutoff_ok && self.sampling_ok
    }
}

/// Cutoff above five times the band of interest, sampling above five times the cutoff.
pub fn check_filter_rules(cutoff_hz: f64, sample_rate_hz: f64, f_max_hz: f64) -> FilterVerdict {
    FilterVerdict {
        cutoff_ok: cutoff_hz > 5.0 * f_max_hz,
        sampling_ok: sample_rate_hz > 5.0 * cutoff_hz,
    }
}

/// Filtered rates and attitude estimate for one control tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    pub rates: [f64; 3],
    pub angles: [f64; 3],
}

/// Stateful sensor chain: IMU sample, per-axis low-pass, complementary
/// filter for roll and pitch, gyro integration for yaw.
#[derive(Debug, Clone)]
pub struct SensorChain {
    cfg: SensorConfig,
    rng: SensorRng,
    gyro_lpf: [LowPass; 3],
    accel_lpf: [LowPass; 3],
    angles: Option<[f64; 3]>,
}

impl SensorChain {
    pub fn new(cfg: &SensorConfig) -> Result<Self> {
        cfg.validate()?;
        let lp = LowPass::new(cfg.lpf_cutoff_hz, cfg.sample_rate_hz)?;
        Ok(SensorChain {
            cfg: cfg.clone(),
            rng: sensor_rng(cfg.rng_seed),
            gyro_lpf: [lp; 3],
            accel_lpf: [lp; 3],
            angles: None,
        })
    }

    pub fn measure(&mut self, s: &State, accel_world: [f64; 3], gravity: f64) -> Measurement {
        let imu = sample_imu(s, accel_world, gravity, &self.cfg, &mut self.rng);
        let mut rates = [0.0; 3];
        let mut accel = [0.0; 3];
        for i in 0..3 {
            rates[i] = self.gyro_lpf[i].step(imu.gyro[i]);
            accel[i] = self.accel_lpf[i].step(imu.accel[i]);
        }
        let acc_angles = [accel_roll(accel), accel_pitch(accel)];
        let dt = self.cfg.sample_time();
        let angles = match self.angles {
            None => [acc_angles[0], acc_angles[1], 0.0],
            Some(prev) => [
                complementary(rates[0], acc_angles[0], prev[0], self.cfg.cf_alpha, dt),
                complementary(rates[1], acc_angles[1], prev[1], self.cfg.cf_alpha, dt),
                prev[2] + rates[2] * dt,
            ],
        };
        self.angles = Some(angles);
        Measurement { rates, angles }
    }
}

/// Welch-averaged one-sided power spectral density with a Hann window and
/// 50 % overlap. Returns `(frequency_hz, psd)` pairs. Report-only utility.
pub fn welch_psd(x: &Signal, segment_len: usize) -> Result<Vec<(f64, f64)>> {
    if segment_len < 8 || x.len() < segment_len {
        return Err(Error::Data(format!(
            "need at least {segment_len} samples (>= 8) for a Welch segment, have {}",
            x.len()
        )));
    }
    let fs = 1.0 / x.sample_time;
    let window: Vec<f64> = (0..segment_len)
        .map(|i| {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (segment_len - 1) as f64).cos()
        })
        .collect();
    let w_power: f64 = window.iter().map(|w| w * w).sum();
    let hop = segment_len / 2;
    let bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut segments = 0usize;
    let mut start = 0;
    while start + segment_len <= x.len() {
        let seg = &x.samples[start..start + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for (k, slot) in acc.iter_mut().enumerate() {
            let mut z = Complex64::new(0.0, 0.0);
            for (n, (&v, &w)) in seg.iter().zip(&window).enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / segment_len as f64;
                z += Complex64::from_polar((v - mean) * w, ang);
            }
            *slot += z.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || 2 * k == segment_len { 1.0 } else { 2.0 };
            let f = k as f64 * fs / segment_len as f64;
            (f, one_sided * p / (segments as f64 * fs * w_power))
        })
        .collect())
}
