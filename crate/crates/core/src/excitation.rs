//! PRBS design and generation, persistency of excitation, square waves.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Fibonacci tap sets giving maximal-length sequences, indexed by register size.
pub const TAP_TABLE: [(u32, &[u32]); 15] = [
    (2, &[2, 1]),
    (3, &[3, 2]),
    (4, &[4, 3]),
    (5, &[5, 3]),
    (6, &[6, 5]),
    (7, &[7, 6]),
    (8, &[8, 6, 5, 4]),
    (9, &[9, 5]),
    (10, &[10, 7]),
    (11, &[11, 9]),
    (12, &[12, 11, 10, 4]),
    (13, &[13, 12, 11, 8]),
    (14, &[14, 13, 12, 2]),
    (15, &[15, 14]),
    (16, &[16, 15, 13, 4]),
];

pub fn taps_for(n_bits: u32) -> Option<&'static [u32]> {
    TAP_TABLE.iter().find(|(n, _)| *n == n_bits).map(|(_, t)| *t)
}

/// Frequency band of interest, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationBand {
    pub omega_min: f64,
    pub omega_max: f64,
}

impl ExcitationBand {
    pub fn new(omega_min: f64, omega_max: f64) -> Result<Self> {
        if !(omega_min > 0.0 && omega_max > omega_min && omega_max.is_finite()) {
            return Err(Error::Config(format!(
                "band needs 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]"
            )));
        }
        Ok(ExcitationBand { omega_min, omega_max })
    }

    pub fn from_time_constants(tau_max: f64, tau_min: f64) -> Result<Self> {
        if !(tau_min > 0.0 && tau_max > 0.0) {
            return Err(Error::Config("time constants must be positive".into()));
        }
        Self::new(1.0 / tau_max, 1.0 / tau_min)
    }

    pub fn tau_max(&self) -> f64 {
        1.0 / self.omega_min
    }

    pub fn tau_min(&self) -> f64 {
        1.0 / self.omega_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrbsConfig {
    pub n_bits: u32,
    pub taps: Vec<u32>,
    /// Switching (chip) time, s.
    pub delta_t: f64,
    pub amplitude: f64,
    /// Initial register contents, nonzero.
    pub seed: u32,
    /// Chips per period. Equals `2^n_bits − 1` unless built with [`PrbsConfig::manual`].
    pub length: usize,
}

impl PrbsConfig {
    pub fn maximal(n_bits: u32, delta_t: f64, amplitude: f64, seed: u32) -> Result<Self> {
        let taps = taps_for(n_bits)
            .ok_or_else(|| Error::Config(format!("no tap set for a {n_bits}-bit register (2..=16)")))?
            .to_vec();
        let cfg = PrbsConfig {
            n_bits,
            taps,
            delta_t,
            amplitude,
            seed,
            length: (1usize << n_bits) - 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Explicit override of switching time and period length. The smallest
    /// register covering `length` chips is used and its sequence truncated,
    /// so the balance and autocorrelation properties no longer hold exactly.
    pub fn manual(delta_t: f64, length: usize, amplitude: f64, seed: u32) -> Result<Self> {
        let n_bits = (2..=16u32)
            .find(|&n| (1usize << n) - 1 >= length)
            .ok_or_else(|| Error::Config(format!("length {length} exceeds a 16-bit register")))?;
        let mut cfg = Self::maximal(n_bits, delta_t, amplitude, seed)?;
        cfg.length = length;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn period_chips(&self) -> usize {
        self.length
    }

    pub fn is_maximal(&self) -> bool {
        self.length == (1usize << self.n_bits) - 1
    }

    /// Period in seconds.
    pub fn period(&self) -> f64 {
        self.length as f64 * self.delta_t
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=31).contains(&self.n_bits) {
            return Err(Error::Config(format!("n_bits {} out of range", self.n_bits)));
        }
        if self.seed == 0 {
            return Err(Error::Config("PRBS seed must be nonzero (all-zero state is absorbing)".into()));
        }
        if self.seed >> self.n_bits != 0 {
            return Err(Error::Config(format!(
                "seed {:#x} does not fit a {}-bit register",
                self.seed, self.n_bits
            )));
        }
        if !self.taps.contains(&self.n_bits) || self.taps.iter().any(|&t| t == 0 || t > self.n_bits) {
            return Err(Error::Config(format!(
                "taps {:?} must include {} and lie in 1..={}",
                self.taps, self.n_bits, self.n_bits
            )));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::Config(format!("delta_t must be positive, got {}", self.delta_t)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Config("amplitude must be finite".into()));
        }
        if self.length == 0 || self.length > (1usize << self.n_bits) - 1 {
            return Err(Error::Config(format!("length {} invalid for {} bits", self.length, self.n_bits)));
        }
        Ok(())
    }
}

/// Fibonacci LFSR over GF(2).
#[derive(Debug, Clone)]
pub struct Lfsr {
    n_bits: u32,
    taps: Vec<u32>,
    state: u32,
}

impl Lfsr {
    pub fn new(n_bits: u32, taps: &[u32], seed: u32) -> Result<Self> {
        if seed == 0 {
            return Err(Error::Config("LFSR seed must be nonzero".into()));
        }
        Ok(Lfsr { n_bits, taps: taps.to_vec(), state: seed })
    }

    /// Emits the low bit, then shifts in the feedback.
    pub fn next_bit(&mut self) -> u32 {
        let out = self.state & 1;
        let fb = self
            .taps
            .iter()
            .fold(0, |acc, &t| acc ^ ((self.state >> (self.n_bits - t)) & 1));
        self.state = (self.state >> 1) | (fb << (self.n_bits - 1));
        out
    }
}

/// One period of ±1 chips; a register 1 bit maps to −1.
pub fn chip_sequence(cfg: &PrbsConfig) -> Result<Vec<i8>> {
    cfg.validate()?;
    let mut reg = Lfsr::new(cfg.n_bits, &cfg.taps, cfg.seed)?;
    Ok((0..cfg.length)
        .map(|_| if reg.next_bit() == 1 { -1 } else { 1 })
        .collect())
}

/// Holds each chip for `delta_t`, with chip boundaries snapped to the nearest sample.
pub fn generate_prbs(cfg: &PrbsConfig, duration: f64, sample_time: f64) -> Result<Signal> {
    if !(duration > 0.0) || !(sample_time > 0.0) {
        return Err(Error::Config("duration and sample time must be positive".into()));
    }
    let chips = chip_sequence(cfg)?;
    let n = (duration / sample_time).round() as usize;
    let ratio = cfg.delta_t / sample_time;
    let mut out = Vec::with_capacity(n);
    let mut j = 0usize;
    let mut next_boundary = (ratio).round() as usize;
    for k in 0..n {
        while k >= next_boundary {
            j += 1;
            next_boundary = ((j + 1) as f64 * ratio).round() as usize;
        }
        out.push(cfg.amplitude * chips[j % chips.len()] as f64);
    }
    Signal::new(out, sample_time, "prbs")
}

/// Chips needed to identify the static gain: `gain_factor · τ_max / Δt`.
pub fn required_chips(band: &ExcitationBand, gain_factor: f64) -> f64 {
    gain_factor * band.tau_max() / switching_time(band)
}

/// `Δt = 0.3 · 2π · τ_min`.
pub fn switching_time(band: &ExcitationBand) -> f64 {
    0.3 * 2.0 * std::f64::consts::PI * band.tau_min()
}

pub fn design_prbs(band: &ExcitationBand, amplitude: f64, gain_factor: f64) -> Result<PrbsConfig> {
    ExcitationBand::new(band.omega_min, band.omega_max)?;
    if !(3.0..=5.0).contains(&gain_factor) {
        return Err(Error::Config(format!("gain_factor {gain_factor} outside [3, 5]")));
    }
    let delta_t = switching_time(band);
    let n_req = required_chips(band, gain_factor);
    let n_bits = (2..=16u32)
        .find(|&n| ((1u64 << n) - 1) as f64 >= n_req)
        .ok_or_else(|| Error::Config(format!("{n_req:.1} chips exceed a 16-bit register")))?;
    PrbsConfig::maximal(n_bits, delta_t, amplitude, 1)
}

/// Largest `r ≤ max_order` for which the `r × r` sample covariance of lagged
/// input windows is numerically positive definite.
pub fn persistency_order(u: &Signal, max_order: usize) -> Result<usize> {
    if max_order == 0 {
        return Ok(0);
    }
    if u.len() <= 5 * max_order {
        return Err(Error::Data(format!(
            "{} samples are too few to assess order {max_order} (need > {})",
            u.len(),
            5 * max_order
        )));
    }
    let rows = u.len() - max_order + 1;
    let x = &u.samples;
    // Leading principal blocks of one Gram matrix are nested, so λmin is
    // monotone in r and the first failure ends the search.
    let gram = DMatrix::from_fn(max_order, max_order, |i, j| {
        (0..rows)
            .map(|t| x[t + max_order - 1 - i] * x[t + max_order - 1 - j])
            .sum::<f64>()
            / rows as f64
    });
    let mut order = 0;
    for r in 1..=max_order {
        let eig = SymmetricEigen::new(gram.view((0, 0), (r, r)).into_owned()).eigenvalues;
        let lmax = eig.iter().cloned().fold(0.0f64, f64::max);
        let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if lmax > 0.0 && lmin > 1e-9 * lmax {
            order = r;
        } else {
            break;
        }
    }
    Ok(order)
}

/// ±amplitude alternating every half period, starting positive.
pub fn square_wave(period: f64, amplitude: f64, duration: f64, sample_time: f64) -> Result<Signal> {
    if !(sample_time > 0.0) || !(period > 2.0 * sample_time) {
        return Err(Error::Config(format!(
            "square period {period} must exceed twice the sample time {sample_time}"
        )));
    }
    let n = (duration / sample_time).round() as usize;
    let half = period / 2.0;
    let samples = (0..n)
        .map(|k| {
            let idx = (k as f64 * sample_time / half + 1e-9).floor() as u64;
            if idx % 2 == 0 { amplitude } else { -amplitude }
        })
        .collect();
    Signal::new(samples, sample_time, "square")
}
