use nalgebra::DVector;

use super::pid::{cascade_step, CascadeConfig, CascadeState};
use super::statespace::{poly_to_statespace, StateSpace};
use crate::datalog::{DataLog, LogHeader};
use crate::error::{Error, Result};
use crate::estimation::PolyModel;
use crate::signal::Signal;

/// One rotational channel as seen by the controller.
pub trait ChannelPlant {
    fn sample_time(&self) -> f64;
    /// Current `(rate, angle)` measurement.
    fn measure(&mut self) -> Result<(f64, f64)>;
    /// Applies command `u` for one sample period.
    fn advance(&mut self, u: f64) -> Result<()>;
    /// Full state for state feedback, angle last; `None` if unavailable.
    fn state_vector(&self) -> Option<DVector<f64>> {
        None
    }
}

/// Identified model in the loop: realization of `B/A` driving the rate,
/// angle as its forward-Euler integral.
#[derive(Debug, Clone)]
pub struct ModelPlant {
    sys: StateSpace,
    x: DVector<f64>,
    angle: f64,
    step: usize,
}

impl ModelPlant {
    pub fn new(m: &PolyModel) -> Result<Self> {
        if m.nk == 0 {
            return Err(Error::Model("a model in the loop needs nk >= 1".into()));
        }
        let sys = poly_to_statespace(m)?;
        let n = sys.order();
        Ok(ModelPlant { sys, x: DVector::zeros(n), angle: 0.0, step: 0 })
    }

    fn rate(&self) -> f64 {
        (&self.sys.c * &self.x)[(0, 0)]
    }
}

impl ChannelPlant for ModelPlant {
    fn sample_time(&self) -> f64 {
        self.sys.sample_time
    }

    fn measure(&mut self) -> Result<(f64, f64)> {
        Ok((self.rate(), self.angle))
    }

    fn advance(&mut self, u: f64) -> Result<()> {
        let y = self.rate();
        self.angle += self.sys.sample_time * y;
        self.x = &self.sys.a * &self.x + &self.sys.b * u;
        self.step += 1;
        if !self.x.iter().all(|v| v.is_finite() && v.abs() < 1e12) || !self.angle.is_finite() {
            return Err(Error::Simulation {
                step: self.step,
                message: "identified model diverged in closed loop".into(),
            });
        }
        Ok(())
    }

    fn state_vector(&self) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            self.x.len() + 1,
            self.x.iter().copied().chain(std::iter::once(self.angle)),
        ))
    }
}

#[derive(Debug, Clone)]
pub enum Controller {
    Cascade(CascadeConfig),
    /// Command is the excitation alone.
    OpenLoop,
    /// `u = −K [x; angle − r]`, excitation added at the output.
    StateFeedback(DVector<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RolloutOptions {
    pub angle_cap_rad: Option<f64>,
}

/// Runs the loop for `refs.len()` samples and logs every step.
pub fn closedloop_simulate(
    plant: &mut dyn ChannelPlant,
    controller: &Controller,
    refs: &Signal,
    disturbance: &Signal,
    opts: RolloutOptions,
) -> Result<DataLog> {
    let ts = plant.sample_time();
    if refs.len() != disturbance.len() {
        return Err(Error::Data("reference and disturbance lengths differ".into()));
    }
    for s in [refs, disturbance] {
        if (s.sample_time - ts).abs() > 1e-12 * ts {
            return Err(Error::Data(format!(
                "signal '{}' sampled at {} s, plant at {ts} s",
                s.label, s.sample_time
            )));
        }
    }
    let mut log = DataLog::with_header(LogHeader { sample_rate_hz: 1.0 / ts, ..LogHeader::default() });
    let mut cs = CascadeState::default();
    for k in 0..refs.len() {
        let t = k as f64 * ts;
        let (rate, angle) = plant.measure()?;
        if !(rate.is_finite() && angle.is_finite()) {
            return Err(Error::Simulation { step: k, message: "non-finite measurement".into() });
        }
        if let Some(cap) = opts.angle_cap_rad {
            if angle.abs() > cap {
                return Err(Error::AngleCap { time: t, angle_deg: angle.to_degrees(), cap_deg: cap.to_degrees() });
            }
        }
        let (r, d) = (refs.samples[k], disturbance.samples[k]);
        let u = match controller {
            Controller::Cascade(cfg) => {
                let (u, next) = cascade_step(cfg, r, angle, rate, d, ts, cs);
                cs = next;
                u
            }
            Controller::OpenLoop => d,
            Controller::StateFeedback(k_gain) => {
                let mut x = plant
                    .state_vector()
                    .ok_or_else(|| Error::Design("plant exposes no state for state feedback".into()))?;
                if x.len() != k_gain.len() {
                    return Err(Error::Design(format!("gain has {} entries, state {}", k_gain.len(), x.len())));
                }
                let last = x.len() - 1;
                x[last] -= r;
                -k_gain.dot(&x) + d
            }
        };
        log.push(t, r, d, u, rate, angle);
        plant.advance(u)?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros(n: usize, ts: f64) -> Signal {
        Signal::new(vec![0.0; n], ts, "zero").unwrap()
    }

    #[test]
    fn model_against_itself_is_deterministic() {
        let m = PolyModel::from_polynomials(&[1.0, -0.9], &[0.0, 0.05], 0.004).unwrap();
        let d = Signal::new((0..500).map(|k| if (k / 7) % 2 == 0 { 0.3 } else { -0.3 }).collect(), 0.004, "d").unwrap();
        let run = || {
            let mut p = ModelPlant::new(&m).unwrap();
            closedloop_simulate(&mut p, &Controller::Cascade(CascadeConfig::default()), &zeros(500, 0.004), &d, RolloutOptions::default())
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn quiet_loop_stays_at_zero() {
        let m = PolyModel::from_polynomials(&[1.0, -0.9], &[0.0, 0.05], 0.004).unwrap();
        let mut p = ModelPlant::new(&m).unwrap();
        let log = closedloop_simulate(&mut p, &Controller::Cascade(CascadeConfig::default()), &zeros(100, 0.004), &zeros(100, 0.004), RolloutOptions::default()).unwrap();
        assert!(log.u.iter().chain(&log.y_rate).chain(&log.y_angle).all(|&v| v == 0.0));
    }

    #[test]
    fn open_loop_command_is_the_excitation() {
        let m = PolyModel::from_polynomials(&[1.0, -0.5], &[0.0, 1.0], 0.01).unwrap();
        let mut p = ModelPlant::new(&m).unwrap();
        let d = Signal::new(vec![1.0, 0.0, 0.0, 0.0], 0.01, "d").unwrap();
        let log = closedloop_simulate(&mut p, &Controller::OpenLoop, &zeros(4, 0.01), &d, RolloutOptions::default()).unwrap();
        assert_eq!(log.u, d.samples);
        assert_eq!(log.y_rate, vec![0.0, 1.0, 0.5, 0.25]);
        assert_eq!(log.y_angle, vec![0.0, 0.0, 0.01, 0.015]);
    }

    #[test]
    fn angle_cap_aborts() {
        let m = PolyModel::from_polynomials(&[1.0, -1.0], &[0.0, 1.0], 0.01).unwrap();
        let mut p = ModelPlant::new(&m).unwrap();
        let d = Signal::new(vec![1.0; 200], 0.01, "d").unwrap();
        let opts = RolloutOptions { angle_cap_rad: Some(0.35) };
        let r = closedloop_simulate(&mut p, &Controller::OpenLoop, &zeros(200, 0.01), &d, opts);
        assert!(matches!(r, Err(Error::AngleCap { .. })));
    }

    #[test]
    fn zero_delay_model_rejected() {
        let m = PolyModel::from_polynomials(&[1.0, -0.5], &[1.0], 0.01).unwrap();
        assert!(ModelPlant::new(&m).is_err());
    }
}
