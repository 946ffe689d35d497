use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_chacha::ChaCha8Rng;

use super::config::PipelineConfig;
use crate::control::{closedloop_simulate, ChannelPlant, Controller, RolloutOptions};
use crate::datalog::{DataLog, LogHeader, LoopMode};
use crate::error::{Error, Result};
use crate::excitation::{generate_prbs, square_wave};
use crate::plant::{rigid_body_derivatives, step_rk4, trim_hover, Channel, ControlVector, QuadParams, RotorSet, State};
use crate::sensing::{SensorChain, SensorConfig};
use crate::signal::Signal;

/// Independent 64-bit seed for stream `stream` of the master `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// The three records of an identification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Record {
    Training,
    ValidationPrbs,
    ValidationSquare,
}

impl Record {
    pub const ALL: [Record; 3] = [Record::Training, Record::ValidationPrbs, Record::ValidationSquare];

    pub fn name(self) -> &'static str {
        match self {
            Record::Training => "training",
            Record::ValidationPrbs => "validation_prbs",
            Record::ValidationSquare => "validation_square",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Record::Training => 1,
            Record::ValidationPrbs => 2,
            Record::ValidationSquare => 3,
        }
    }
}

impl std::str::FromStr for Record {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "training" => Ok(Record::Training),
            "validation_prbs" => Ok(Record::ValidationPrbs),
            "validation_square" => Ok(Record::ValidationSquare),
            other => Err(Error::Parse(format!(
                "unknown record '{other}' (training, validation-prbs, validation-square)"
            ))),
        }
    }
}

/// The nonlinear quadrotor on a fixed-axis rig, seen through its sensors.
pub struct QuadChannel {
    params: QuadParams,
    state: State,
    hover: ControlVector,
    command: ControlVector,
    sensors: SensorChain,
    channel: Channel,
    torque_per_unit: f64,
    axis_lock: bool,
    substeps: usize,
    dt: f64,
    disturbance: Option<(Normal<f64>, ChaCha8Rng)>,
}

impl QuadChannel {
    pub fn new(cfg: &PipelineConfig, sensor: &SensorConfig) -> Result<Self> {
        let (state, hover) = trim_hover(&cfg.plant);
        Ok(QuadChannel {
            params: cfg.plant,
            state,
            hover,
            command: hover,
            sensors: SensorChain::new(sensor)?,
            channel: cfg.channel,
            torque_per_unit: cfg.rig.torque_per_unit[cfg.channel.index()],
            axis_lock: cfg.rig.axis_lock,
            substeps: cfg.rig.substeps,
            dt: sensor.sample_time(),
            disturbance: match cfg.rig.disturbance_std {
                0.0 => None,
                sd => {
                    let mut rng = ChaCha8Rng::seed_from_u64(sensor.rng_seed);
                    rng.set_stream(1);
                    let n = Normal::new(0.0, sd).map_err(|e| Error::Config(format!("disturbance_std: {e}")))?;
                    Some((n, rng))
                }
            },
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    fn lock(&mut self) {
        let s = &mut self.state;
        s.x = 0.0;
        s.y = 0.0;
        s.z = 0.0;
        s.vx = 0.0;
        s.vy = 0.0;
        s.vz = 0.0;
        if self.channel != Channel::Roll {
            s.phi = 0.0;
            s.p = 0.0;
        }
        if self.channel != Channel::Pitch {
            s.theta = 0.0;
            s.q = 0.0;
        }
        if self.channel != Channel::Yaw {
            s.psi = 0.0;
            s.r = 0.0;
        }
    }

    fn accel_world(&self) -> Result<[f64; 3]> {
        if self.axis_lock {
            return Ok([0.0; 3]);
        }
        let rotors = RotorSet::from_speeds(self.state.w, &self.params);
        let u = crate::plant::mix_forces(&rotors, &self.params)?;
        let d = rigid_body_derivatives(&self.state, &u, rotors.omega_bar, &self.params)?;
        Ok([d[3], d[4], d[5]])
    }
}

impl ChannelPlant for QuadChannel {
    fn sample_time(&self) -> f64 {
        self.dt
    }

    fn measure(&mut self) -> Result<(f64, f64)> {
        let acc = self.accel_world()?;
        let m = self.sensors.measure(&self.state, acc, self.params.gravity);
        let i = self.channel.index();
        Ok((m.rates[i], m.angles[i]))
    }

    fn advance(&mut self, u: f64) -> Result<()> {
        let w = match &mut self.disturbance {
            Some((n, rng)) => n.sample(rng),
            None => 0.0,
        };
        let torque = self.torque_per_unit * (u + w);
        let mut cmd = self.hover;
        match self.channel {
            Channel::Roll => cmd.u2 = torque,
            Channel::Pitch => cmd.u3 = torque,
            Channel::Yaw => cmd.u4 = torque,
        }
        self.command = cmd;
        let h = self.dt / self.substeps as f64;
        for _ in 0..self.substeps {
            self.state = step_rk4(&self.state, &self.command, h, &self.params)?;
            if self.axis_lock {
                self.lock();
            }
        }
        Ok(())
    }
}

/// Closed (or open, for yaw) loop run of the rig under the given reference
/// and excitation; aborts if a roll/pitch angle leaves the cap.
pub fn run_experiment(
    cfg: &PipelineConfig,
    reference: &Signal,
    excitation: &Signal,
    noise_seed: u64,
    label: &str,
) -> Result<DataLog> {
    cfg.validate()?;
    let sensor = SensorConfig { rng_seed: noise_seed, ..cfg.sensor.clone() };
    let mut plant = QuadChannel::new(cfg, &sensor)?;
    let mode = cfg.loop_mode();
    let controller = match mode {
        LoopMode::Closed => Controller::Cascade(cfg.cascade),
        LoopMode::Open => Controller::OpenLoop,
    };
    let opts = RolloutOptions {
        angle_cap_rad: match cfg.channel {
            Channel::Yaw => None,
            _ => Some(cfg.rig.angle_cap_deg.to_radians()),
        },
    };
    let mut log = closedloop_simulate(&mut plant, &controller, reference, excitation, opts)?;
    log.header = LogHeader {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        sample_rate_hz: cfg.sensor.sample_rate_hz,
        channel: cfg.channel,
        axis_lock: cfg.rig.axis_lock,
        loop_mode: mode,
        signal: label.to_string(),
    };
    Ok(log)
}

/// Register seeds for the training and validation PRBS, guaranteed distinct.
fn register_seeds(cfg: &PipelineConfig) -> Result<(u32, u32)> {
    let a = cfg.excitation.prbs(derive_seed(cfg.seed, 10) as u32)?.seed;
    let mut b = cfg.excitation.prbs(derive_seed(cfg.seed, 11) as u32)?.seed;
    if a == b {
        b = cfg.excitation.prbs(b)?.seed;
    }
    Ok((a, b))
}

/// Excitation for a record: a quiet lead-in of `trim_s`, then one PRBS
/// period or the square-wave record.
pub fn record_excitation(cfg: &PipelineConfig, record: Record) -> Result<Signal> {
    let ts = cfg.sample_time();
    let lead = (cfg.identification.trim_s / ts).round() as usize;
    let (train_seed, val_seed) = register_seeds(cfg)?;
    let body = match record {
        Record::Training | Record::ValidationPrbs => {
            let seed = if record == Record::Training { train_seed } else { val_seed };
            let prbs = cfg.excitation.prbs(seed - 1)?;
            debug_assert_eq!(prbs.seed, seed);
            generate_prbs(&prbs, prbs.period(), ts)?
        }
        Record::ValidationSquare => square_wave(
            cfg.excitation.square_period_s,
            cfg.excitation.amplitude(),
            cfg.excitation.square_duration_s,
            ts,
        )?,
    };
    let samples = std::iter::repeat(0.0).take(lead).chain(body.samples).collect();
    Signal::new(samples, ts, record.name())
}

pub fn run_record(cfg: &PipelineConfig, record: Record) -> Result<DataLog> {
    let d = record_excitation(cfg, record)?;
    let r = Signal::new(vec![0.0; d.len()], d.sample_time, "r")?;
    run_experiment(cfg, &r, &d, derive_seed(cfg.seed, record.stream()), record.name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::SensorConfig;

    fn short_cfg() -> PipelineConfig {
        PipelineConfig {
            excitation: super::super::config::ExcitationSettings {
                manual_delta_t: Some(0.02),
                manual_length: Some(127),
                square_duration_s: 2.0,
                ..Default::default()
            },
            identification: super::super::config::IdentificationSettings {
                trim_s: 0.2,
                ..Default::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn quiet_run_is_all_zero() {
        let cfg = PipelineConfig { sensor: SensorConfig::noiseless(), ..short_cfg() };
        let z = Signal::new(vec![0.0; 500], cfg.sample_time(), "z").unwrap();
        let log = run_experiment(&cfg, &z, &z, 5, "quiet").unwrap();
        assert!(log.y_rate.iter().chain(&log.y_angle).chain(&log.u).all(|&v| v == 0.0));
    }

    #[test]
    fn runs_are_byte_identical() {
        let cfg = short_cfg();
        let a = run_record(&cfg, Record::Training).unwrap().to_csv();
        let b = run_record(&cfg, Record::Training).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn locked_axes_stay_still() {
        let cfg = short_cfg();
        let sensor = SensorConfig::noiseless();
        let mut ch = QuadChannel::new(&cfg, &sensor).unwrap();
        for k in 0..500 {
            ch.advance(if (k / 13) % 2 == 0 { 0.3 } else { -0.3 }).unwrap();
            let s = ch.state();
            assert_eq!((s.q, s.r, s.theta, s.psi), (0.0, 0.0, 0.0, 0.0));
        }
        assert!(ch.state().p != 0.0);
    }

    #[test]
    fn yaw_is_open_loop() {
        let cfg = PipelineConfig { channel: Channel::Yaw, ..short_cfg() };
        let log = run_record(&cfg, Record::Training).unwrap();
        assert_eq!(log.header.loop_mode, LoopMode::Open);
        assert_eq!(log.u, log.d_s);
    }

    #[test]
    fn records_use_distinct_sequences() {
        let cfg = short_cfg();
        let a = record_excitation(&cfg, Record::Training).unwrap();
        let b = record_excitation(&cfg, Record::ValidationPrbs).unwrap();
        assert_eq!(a.len(), b.len());
        assert_ne!(a.samples, b.samples);
    }
}
