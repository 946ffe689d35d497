use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Clamp on the accumulated error integral.
    pub integral_limit: f64,
    pub output_limit: f64,
    /// First-order filter on the derivative term; `None` differentiates raw.
    pub derivative_cutoff_hz: Option<f64>,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            kp: 1.0,
            ki: 0.0,
            kd: 0.0,
            integral_limit: 1.0,
            output_limit: 1.0,
            derivative_cutoff_hz: None,
        }
    }
}

impl PidGains {
    pub fn p(kp: f64, output_limit: f64) -> Self {
        PidGains { kp, output_limit, ..PidGains::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.kp, self.ki, self.kd].iter().all(|g| g.is_finite()) {
            return Err(Error::Config("PID gains must be finite".into()));
        }
        if !(self.integral_limit > 0.0 && self.output_limit > 0.0) {
            return Err(Error::Config("PID limits must be positive".into()));
        }
        if let Some(fc) = self.derivative_cutoff_hz {
            if !(fc > 0.0) {
                return Err(Error::Config("derivative cutoff must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_measurement: Option<f64>,
    pub derivative: f64,
}

/// One step of the discrete PID law. The integral accumulates the current
/// error before the output is formed; the derivative acts on the measurement.
pub fn pid_step(g: &PidGains, setpoint: f64, measurement: f64, dt: f64, s: PidState) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let e = setpoint - measurement;
    let integral = (s.integral + e * dt).clamp(-g.integral_limit, g.integral_limit);
    let raw = match s.prev_measurement {
        Some(prev) => -(measurement - prev) / dt,
        None => 0.0,
    };
    let derivative = match (g.derivative_cutoff_hz, s.prev_measurement) {
        (Some(fc), Some(_)) => {
            let a = (-2.0 * std::f64::consts::PI * fc * dt).exp();
            a * s.derivative + (1.0 - a) * raw
        }
        _ => raw,
    };
    let u = g.kp * e + g.ki * integral + g.kd * derivative;
    let u = u.clamp(-g.output_limit, g.output_limit);
    (u, PidState { integral, prev_measurement: Some(measurement), derivative })
}

/// Where the excitation enters the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionPort {
    /// Added to the rate-controller output.
    ControllerOutput,
    /// Added to the angle reference.
    Reference,
}

/// Angle loop `C1` feeding a rate loop `C2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub injection: InjectionPort,
    pub outer: PidGains,
    pub inner: PidGains,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            injection: InjectionPort::ControllerOutput,
            // rate reference limit, rad/s
            outer: PidGains::p(3.0, 3.5),
            inner: PidGains {
                kp: 1.3,
                ki: 0.01,
                kd: 0.023,
                integral_limit: 1.0,
                output_limit: 1.0,
                derivative_cutoff_hz: Some(42.0),
            },
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        self.outer.validate()?;
        self.inner.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CascadeState {
    pub outer: PidState,
    pub inner: PidState,
}

/// Returns the total channel command, excitation included.
pub fn cascade_step(
    cfg: &CascadeConfig,
    angle_ref: f64,
    angle_meas: f64,
    rate_meas: f64,
    d_s: f64,
    dt: f64,
    s: CascadeState,
) -> (f64, CascadeState) {
    let (angle_ref, out_add) = match cfg.injection {
        InjectionPort::ControllerOutput => (angle_ref, d_s),
        InjectionPort::Reference => (angle_ref + d_s, 0.0),
    };
    let (rate_ref, outer) = pid_step(&cfg.outer, angle_ref, angle_meas, dt, s.outer);
    let (u, inner) = pid_step(&cfg.inner, rate_ref, rate_meas, dt, s.inner);
    (u + out_add, CascadeState { outer, inner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wide(kp: f64, ki: f64, kd: f64) -> PidGains {
        PidGains { kp, ki, kd, integral_limit: 1e9, output_limit: 1e9, derivative_cutoff_hz: None }
    }

    #[test]
    fn proportional_only() {
        let (u, _) = pid_step(&wide(3.0, 0.0, 0.0), 2.0, 0.0, 0.004, PidState::default());
        assert_eq!(u, 6.0);
    }

    #[test]
    fn zero_error_stays_zero() {
        let g = wide(1.3, 0.01, 0.023);
        let mut s = PidState::default();
        for _ in 0..100 {
            let (u, next) = pid_step(&g, 0.5, 0.5, 0.004, s);
            assert_eq!(u, 0.0);
            s = next;
        }
        assert_eq!(s.integral, 0.0);
    }

    #[test]
    fn first_step_hand_trace() {
        let (u, _) = pid_step(&wide(1.3, 0.01, 0.023), 1.0, 0.0, 0.004, PidState::default());
        assert!((u - 1.30004).abs() < 1e-12);
    }

    #[test]
    fn derivative_acts_on_measurement() {
        let g = wide(0.0, 0.0, 1.0);
        let (_, s) = pid_step(&g, 0.0, 0.0, 0.1, PidState::default());
        // setpoint jump does not kick
        let (u, s) = pid_step(&g, 5.0, 0.0, 0.1, s);
        assert_eq!(u, 0.0);
        let (u, _) = pid_step(&g, 5.0, 0.2, 0.1, s);
        assert!((u + 2.0).abs() < 1e-12);
    }

    #[test]
    fn output_saturates() {
        let g = PidGains { output_limit: 0.5, ..wide(10.0, 0.0, 0.0) };
        assert_eq!(pid_step(&g, 1.0, 0.0, 0.01, PidState::default()).0, 0.5);
        assert_eq!(pid_step(&g, -1.0, 0.0, 0.01, PidState::default()).0, -0.5);
    }

    #[test]
    fn cascade_examples() {
        let cfg = CascadeConfig::default();
        let (u, _) = cascade_step(&cfg, 0.0, 0.0, 0.0, 0.0, 0.004, CascadeState::default());
        assert_eq!(u, 0.0);
        let (rate_ref, _) = pid_step(&cfg.outer, 0.1, 0.0, 0.004, PidState::default());
        assert!((rate_ref - 0.3).abs() < 1e-15);
        let (u, _) = cascade_step(&cfg, 0.0, 0.0, 0.0, 0.5, 0.004, CascadeState::default());
        assert_eq!(u, 0.5);
    }

    proptest! {
        #[test]
        fn integral_respects_clamp(errs in proptest::collection::vec(-100f64..100.0, 1..200), lim in 0.01f64..5.0) {
            let g = PidGains { integral_limit: lim, ..wide(1.0, 1.0, 0.0) };
            let mut s = PidState::default();
            for e in errs {
                s = pid_step(&g, e, 0.0, 0.05, s).1;
                prop_assert!(s.integral.abs() <= lim);
            }
        }

        #[test]
        fn p_only_is_linear_and_memoryless(e1 in -10f64..10.0, e2 in -10f64..10.0, kp in -5f64..5.0) {
            let g = wide(kp, 0.0, 0.0);
            let (u1, s) = pid_step(&g, e1, 0.0, 0.01, PidState::default());
            let (u2, _) = pid_step(&g, e2, 0.0, 0.01, s);
            prop_assert_eq!(u1, kp * e1);
            prop_assert_eq!(u2, kp * e2);
        }
    }
}
