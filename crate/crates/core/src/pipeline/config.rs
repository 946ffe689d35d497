use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::CascadeConfig;
use crate::datalog::LoopMode;
use crate::error::{Error, Result};
use crate::excitation::{design_prbs, ExcitationBand, PrbsConfig};
use crate::plant::{Channel, QuadParams};
use crate::sensing::SensorConfig;
use crate::validation::Thresholds;

/// Fixed-axis test rig: how controller commands become torques, and how
/// finely the plant is integrated between control ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    /// N·m per command unit, roll / pitch / yaw.
    pub torque_per_unit: [f64; 3],
    /// Lock the non-selected rotational axes and all translation.
    pub axis_lock: bool,
    /// RK4 substeps per control period.
    pub substeps: usize,
    pub angle_cap_deg: f64,
    /// Std of an unmeasured white disturbance added to the actuator command
    /// each control period (command units): ESC jitter, vibration, air.
    pub disturbance_std: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            torque_per_unit: [0.1, 0.1, 0.05],
            axis_lock: true,
            substeps: 4,
            angle_cap_deg: 20.0,
            disturbance_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationSettings {
    /// rad/s
    pub omega_min: f64,
    pub omega_max: f64,
    pub gain_factor: f64,
    /// Amplitude in degrees-equivalent command units (deg → rad scaling).
    pub amplitude_deg: f64,
    /// Manual override of the switching time; requires `manual_length`.
    pub manual_delta_t: Option<f64>,
    pub manual_length: Option<usize>,
    /// Square-wave validation record.
    pub square_period_s: f64,
    pub square_duration_s: f64,
}

impl Default for ExcitationSettings {
    fn default() -> Self {
        ExcitationSettings {
            omega_min: 0.1,
            omega_max: 20.0,
            gain_factor: 4.0,
            amplitude_deg: 20.0,
            manual_delta_t: None,
            manual_length: None,
            square_period_s: 2.0,
            square_duration_s: 20.0,
        }
    }
}

impl ExcitationSettings {
    pub fn amplitude(&self) -> f64 {
        self.amplitude_deg.to_radians()
    }

    /// PRBS for a given register seed: designed from the band unless a manual
    /// override is set.
    pub fn prbs(&self, register_seed: u32) -> Result<PrbsConfig> {
        let mut cfg = match (self.manual_delta_t, self.manual_length) {
            (Some(dt), Some(n)) => PrbsConfig::manual(dt, n, self.amplitude(), 1)?,
            (None, None) => {
                let band = ExcitationBand::new(self.omega_min, self.omega_max)?;
                design_prbs(&band, self.amplitude(), self.gain_factor)?
            }
            _ => {
                return Err(Error::Config(
                    "manual_delta_t and manual_length must be given together".into(),
                ))
            }
        };
        let states = (1u64 << cfg.n_bits) - 1;
        cfg.seed = (register_seed as u64 % states + 1) as u32;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentificationSettings {
    /// Candidate grid, see [`super::parse_grid`].
    pub grid: String,
    /// Leading seconds dropped from every log before estimation.
    pub trim_s: f64,
    pub thresholds: Thresholds,
}

pub const DEFAULT_GRID: &str = "na=2..10,nb=1..10,nk=1..8; na=2..3,nb=1..3,nc=1..2,nk=1..3";

impl Default for IdentificationSettings {
    fn default() -> Self {
        IdentificationSettings {
            grid: DEFAULT_GRID.into(),
            trim_s: 2.0,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetuneSettings {
    pub step_deg: f64,
    pub horizon_s: f64,
    /// Seconds-to-cost conversion for the settling-time penalty.
    pub settling_weight: f64,
    /// Multipliers applied to the baseline gains.
    pub inner_kp_scale: Vec<f64>,
    pub inner_ki_scale: Vec<f64>,
    pub inner_kd_scale: Vec<f64>,
    pub outer_kp_scale: Vec<f64>,
    pub lqr_q_angle: f64,
    pub lqr_q_state: f64,
    pub lqr_r: f64,
}

impl Default for RetuneSettings {
    fn default() -> Self {
        RetuneSettings {
            step_deg: 10.0,
            horizon_s: 4.0,
            settling_weight: 0.01,
            inner_kp_scale: vec![0.5, 0.75, 1.0, 1.5, 2.0],
            inner_ki_scale: vec![0.0, 1.0, 10.0],
            inner_kd_scale: vec![0.5, 1.0, 2.0],
            outer_kp_scale: vec![0.5, 0.75, 1.0, 1.5, 2.0],
            lqr_q_angle: 100.0,
            lqr_q_state: 1e-6,
            lqr_r: 1.0,
        }
    }
}

/// Everything that determines a run; hashed into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub channel: Channel,
    /// Defaults to closed for roll/pitch and open for yaw.
    pub loop_mode: Option<LoopMode>,
    pub plant: QuadParams,
    pub sensor: SensorConfig,
    pub cascade: CascadeConfig,
    pub rig: RigConfig,
    pub excitation: ExcitationSettings,
    pub identification: IdentificationSettings,
    pub retune: RetuneSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            channel: Channel::Roll,
            loop_mode: None,
            plant: QuadParams::default(),
            sensor: SensorConfig::default(),
            cascade: CascadeConfig::default(),
            rig: RigConfig::default(),
            excitation: ExcitationSettings::default(),
            identification: IdentificationSettings::default(),
            retune: RetuneSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 || self.sensor.rng_seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seeds must not exceed {}", i64::MAX)));
        }
        self.plant.validate()?;
        self.sensor.validate()?;
        self.cascade.validate()?;
        if self.rig.substeps == 0 {
            return Err(Error::Config("rig.substeps must be at least 1".into()));
        }
        if !(self.rig.angle_cap_deg > 0.0) || self.rig.torque_per_unit.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("rig angle cap and torque scales must be positive".into()));
        }
        if !(self.rig.disturbance_std >= 0.0 && self.rig.disturbance_std.is_finite()) {
            return Err(Error::Config("rig.disturbance_std must be finite and non-negative".into()));
        }
        self.excitation.prbs(1)?;
        if !(self.excitation.square_duration_s > 0.0) {
            return Err(Error::Config("square_duration_s must be positive".into()));
        }
        super::parse_grid(&self.identification.grid)?;
        if !(self.identification.trim_s >= 0.0) {
            return Err(Error::Config("trim_s must be non-negative".into()));
        }
        let r = &self.retune;
        if !(r.horizon_s > 0.0 && r.lqr_r > 0.0 && r.lqr_q_angle > 0.0 && r.lqr_q_state >= 0.0) {
            return Err(Error::Config("retune horizon and LQR weights must be positive".into()));
        }
        for v in [&r.inner_kp_scale, &r.inner_ki_scale, &r.inner_kd_scale, &r.outer_kp_scale] {
            if v.is_empty() || v.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::Config("retune scale lists must be non-empty and non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn loop_mode(&self) -> LoopMode {
        self.loop_mode.unwrap_or(match self.channel {
            Channel::Yaw => LoopMode::Open,
            _ => LoopMode::Closed,
        })
    }

    pub fn sample_time(&self) -> f64 {
        self.sensor.sample_time()
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = PipelineConfig::from_toml("seed = 3\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = PipelineConfig::from_toml("[plant]\nmas = 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = PipelineConfig::from_toml("channel = \"pitch\"\n[cascade.outer]\nkp = 2.5\n").unwrap();
        assert_eq!(cfg.channel, Channel::Pitch);
        assert_eq!(cfg.cascade.outer.kp, 2.5);
        assert_eq!(cfg.cascade.inner.kp, 1.3);
        assert_ne!(cfg.hash(), PipelineConfig::default().hash());
    }

    #[test]
    fn yaw_defaults_to_open_loop() {
        let cfg = PipelineConfig { channel: Channel::Yaw, ..PipelineConfig::default() };
        assert_eq!(cfg.loop_mode(), LoopMode::Open);
        assert_eq!(PipelineConfig::default().loop_mode(), LoopMode::Closed);
    }

    #[test]
    fn manual_prbs_override() {
        let ex = ExcitationSettings { manual_delta_t: Some(0.03), manual_length: Some(424), ..Default::default() };
        let p = ex.prbs(7).unwrap();
        assert_eq!(p.length, 424);
        let half = ExcitationSettings { manual_delta_t: Some(0.03), ..Default::default() };
        assert!(half.prbs(1).is_err());
    }
}
