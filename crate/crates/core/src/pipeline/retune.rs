use nalgebra::{DMatrix, DVector};

use super::config::RetuneSettings;
use crate::control::{
    augment_with_angle, closedloop_simulate, lqr_design, poly_to_statespace, CascadeConfig, Controller, Lqr,
    ModelPlant, RolloutOptions,
};
use crate::datalog::DataLog;
use crate::error::{Error, Result};
use crate::estimation::PolyModel;
use crate::signal::Signal;

/// Settling band, as a fraction of the step.
const SETTLING_BAND: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCost {
    /// ∫ (r − angle)² dt
    pub ise: f64,
    /// Last time the angle was outside the band; the horizon if it never settled.
    pub settling_time: f64,
    pub total: f64,
}

pub fn step_cost(log: &DataLog, step: f64, settling_weight: f64) -> StepCost {
    let ts = log.sample_time();
    let ise = log.y_angle.iter().zip(&log.r).map(|(y, r)| (r - y).powi(2)).sum::<f64>() * ts;
    let band = SETTLING_BAND * step.abs();
    let last_out = log
        .y_angle
        .iter()
        .zip(&log.r)
        .rposition(|(y, r)| (r - y).abs() > band);
    let settling_time = match last_out {
        None => 0.0,
        Some(k) => ((k + 1) as f64 * ts).min(log.len() as f64 * ts),
    };
    StepCost { ise, settling_time, total: ise + settling_weight * settling_time }
}

fn step_signals(s: &RetuneSettings, ts: f64) -> Result<(Signal, Signal)> {
    let n = (s.horizon_s / ts).round() as usize;
    let step = s.step_deg.to_radians();
    Ok((Signal::new(vec![step; n], ts, "r")?, Signal::new(vec![0.0; n], ts, "d_s")?))
}

pub fn step_response(m: &PolyModel, controller: &Controller, s: &RetuneSettings) -> Result<DataLog> {
    let (r, d) = step_signals(s, m.sample_time)?;
    let mut plant = ModelPlant::new(m)?;
    closedloop_simulate(&mut plant, controller, &r, &d, RolloutOptions::default())
}

#[derive(Debug, Clone)]
pub struct LqrDesign {
    pub lqr: Lqr,
    /// Gain on `[realization state; angle]`.
    pub gain: DVector<f64>,
    pub cost: StepCost,
    pub trace: DataLog,
}

#[derive(Debug, Clone)]
pub struct RetuneResult {
    pub baseline: CascadeConfig,
    pub baseline_cost: StepCost,
    pub baseline_trace: DataLog,
    pub tuned: CascadeConfig,
    pub tuned_cost: StepCost,
    pub tuned_trace: DataLog,
    pub evaluated: usize,
    pub diverged: usize,
    /// The error text when the Riccati design failed.
    pub lqr: std::result::Result<LqrDesign, String>,
}

fn candidates(base: &CascadeConfig, s: &RetuneSettings) -> Vec<CascadeConfig> {
    let mut out = vec![*base];
    for &a in &s.inner_kp_scale {
        for &b in &s.inner_ki_scale {
            for &c in &s.inner_kd_scale {
                for &d in &s.outer_kp_scale {
                    let mut g = *base;
                    g.inner.kp *= a;
                    g.inner.ki *= b;
                    g.inner.kd *= c;
                    g.outer.kp *= d;
                    if g != *base {
                        out.push(g);
                    }
                }
            }
        }
    }
    out
}

pub fn design_lqr(m: &PolyModel, s: &RetuneSettings) -> Result<LqrDesign> {
    let aug = augment_with_angle(&poly_to_statespace(m)?)?;
    let n = aug.order();
    let mut q = DMatrix::identity(n, n) * s.lqr_q_state;
    q[(n - 1, n - 1)] = s.lqr_q_angle;
    let r = DMatrix::from_element(1, 1, s.lqr_r);
    let lqr = lqr_design(&aug, &q, &r)?;
    let gain = DVector::from_iterator(n, lqr.k.row(0).iter().copied());
    let trace = step_response(m, &Controller::StateFeedback(gain.clone()), s)?;
    let cost = step_cost(&trace, s.step_deg.to_radians(), s.settling_weight);
    Ok(LqrDesign { lqr, gain, cost, trace })
}

/// Grid search over PID gains around `baseline` on the identified model,
/// plus an LQR design on its realization.
pub fn retune(m: &PolyModel, baseline: &CascadeConfig, s: &RetuneSettings) -> Result<RetuneResult> {
    let step = s.step_deg.to_radians();
    let grid = candidates(baseline, s);
    let mut best: Option<(CascadeConfig, StepCost, DataLog)> = None;
    let mut base: Option<(StepCost, DataLog)> = None;
    let mut diverged = 0;
    for (i, g) in grid.iter().enumerate() {
        let trace = match step_response(m, &Controller::Cascade(*g), s) {
            Ok(t) => t,
            Err(Error::Simulation { .. }) => {
                diverged += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let cost = step_cost(&trace, step, s.settling_weight);
        if !cost.total.is_finite() {
            diverged += 1;
            continue;
        }
        if i == 0 {
            base = Some((cost, trace.clone()));
        }
        if best.as_ref().is_none_or(|(_, c, _)| cost.total < c.total) {
            best = Some((*g, cost, trace));
        }
    }
    let (tuned, tuned_cost, tuned_trace) =
        best.ok_or_else(|| Error::Pipeline("retune: every grid point diverged on the model".into()))?;
    let (baseline_cost, baseline_trace) = match base {
        Some(b) => b,
        None => {
            // baseline diverged: report it at the horizon with infinite cost
            let (r, _) = step_signals(s, m.sample_time)?;
            let mut log = DataLog::default();
            log.header.sample_rate_hz = 1.0 / m.sample_time;
            for (k, rv) in r.samples.iter().enumerate() {
                log.push(k as f64 * m.sample_time, *rv, 0.0, f64::NAN, f64::NAN, f64::NAN);
            }
            (StepCost { ise: f64::INFINITY, settling_time: s.horizon_s, total: f64::INFINITY }, log)
        }
    };
    Ok(RetuneResult {
        baseline: *baseline,
        baseline_cost,
        baseline_trace,
        tuned,
        tuned_cost,
        tuned_trace,
        evaluated: grid.len(),
        diverged,
        lqr: design_lqr(m, s).map_err(|e| e.to_string()),
    })
}
