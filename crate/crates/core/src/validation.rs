//! Residual correlation tests, candidate scoring and the two-stage ranking.

use std::cmp::Ordering;
use std::fmt;

use crate::control::{closedloop_simulate, CascadeConfig, Controller, ModelPlant, RolloutOptions};
use crate::datalog::{DataLog, LoopMode};
use crate::error::{Error, Result};
use crate::estimation::{fit_percent, predict_one_step, simulate_model, Dataset, PolyModel};
use crate::signal::Signal;

/// Two-sided 99 % normal quantile.
pub const Z99: f64 = 2.58;
/// Largest tolerated share of lags outside the band.
pub const MAX_OUTSIDE_FRACTION: f64 = 0.05;

pub fn confidence_bound(n: usize) -> f64 {
    Z99 / (n as f64).sqrt()
}

fn fraction_outside(values: &[f64], bound: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| v.abs() > bound).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoCorrelation {
    /// `r_e(k)` for `k = 1..=L`.
    pub values: Vec<f64>,
    pub bound: f64,
    pub fraction_outside: f64,
    pub pass: bool,
    /// Residuals were identically zero; the test passes vacuously.
    pub degenerate: bool,
}

pub fn residual_autocorr(e: &Signal, max_lag: usize) -> Result<AutoCorrelation> {
    autocorr_with_floor(e, max_lag, 0.0)
}

/// Residuals whose RMS is at or below `rms_floor` count as degenerate.
fn autocorr_with_floor(e: &Signal, max_lag: usize, rms_floor: f64) -> Result<AutoCorrelation> {
    let n = e.len();
    if n <= 10 * max_lag {
        return Err(Error::Data(format!("{n} residuals are too few for {max_lag} lags")));
    }
    let bound = confidence_bound(n);
    let x = &e.samples;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 || (energy / n as f64).sqrt() <= rms_floor {
        return Ok(AutoCorrelation {
            values: vec![0.0; max_lag],
            bound,
            fraction_outside: 0.0,
            pass: true,
            degenerate: true,
        });
    }
    let values: Vec<f64> = (1..=max_lag)
        .map(|k| (k..n).map(|t| x[t] * x[t - k]).sum::<f64>() / energy)
        .collect();
    let frac = fraction_outside(&values, bound);
    Ok(AutoCorrelation { values, bound, fraction_outside: frac, pass: frac <= MAX_OUTSIDE_FRACTION, degenerate: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation {
    /// `r_ue(k)` for `k = −L..=L`; index `k + L`.
    pub values: Vec<f64>,
    pub max_lag: usize,
    pub bound: f64,
    /// Judged on `k < 0`.
    pub causality_pass: bool,
    /// Judged on `k ≥ 0`.
    pub adequacy_pass: bool,
    pub fraction_outside_negative: f64,
    pub fraction_outside_nonnegative: f64,
}

impl CrossCorrelation {
    pub fn at(&self, lag: i64) -> f64 {
        self.values[(lag + self.max_lag as i64) as usize]
    }
}

/// `r_ue(k) = Σ e(t) u(t−k) / √(Σe² Σu²)`; positive `k` means `u` leads.
pub fn residual_crosscorr(u: &Signal, e: &Signal, max_lag: usize) -> Result<CrossCorrelation> {
    let n = e.len();
    if u.len() != n {
        return Err(Error::Data(format!("u has {} samples, residuals {n}", u.len())));
    }
    if n <= 10 * max_lag {
        return Err(Error::Data(format!("{n} residuals are too few for {max_lag} lags")));
    }
    let (us, es) = (&u.samples, &e.samples);
    let eu: f64 = us.iter().map(|v| v * v).sum();
    let ee: f64 = es.iter().map(|v| v * v).sum();
    if eu == 0.0 || ee == 0.0 {
        return Err(Error::Degenerate("input or residual has zero energy".into()));
    }
    let norm = (eu * ee).sqrt();
    let l = max_lag as i64;
    let values: Vec<f64> = (-l..=l)
        .map(|k| {
            let mut s = 0.0;
            for t in 0..n as i64 {
                let j = t - k;
                if (0..n as i64).contains(&j) {
                    s += es[t as usize] * us[j as usize];
                }
            }
            s / norm
        })
        .collect();
    let bound = confidence_bound(n);
    let neg = fraction_outside(&values[..max_lag], bound);
    let nonneg = fraction_outside(&values[max_lag..], bound);
    Ok(CrossCorrelation {
        values,
        max_lag,
        bound,
        causality_pass: neg <= MAX_OUTSIDE_FRACTION,
        adequacy_pass: nonneg <= MAX_OUTSIDE_FRACTION,
        fraction_outside_negative: neg,
        fraction_outside_nonnegative: nonneg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub autocorr: AutoCorrelation,
    pub crosscorr: CrossCorrelation,
    pub bound: f64,
    pub whiteness_pass: bool,
    pub causality_pass: bool,
}

pub fn residual_report(u: &Signal, e: &Signal, max_lag: usize) -> Result<ResidualReport> {
    residual_report_with_floor(u, e, max_lag, 0.0)
}

/// As [`residual_report`], but residuals with RMS at or below `rms_floor`
/// are treated as zero: both tests pass trivially and the report is flagged.
pub fn residual_report_with_floor(u: &Signal, e: &Signal, max_lag: usize, rms_floor: f64) -> Result<ResidualReport> {
    let autocorr = autocorr_with_floor(e, max_lag, rms_floor)?;
    let crosscorr = if autocorr.degenerate {
        let bound = autocorr.bound;
        CrossCorrelation {
            values: vec![0.0; 2 * max_lag + 1],
            max_lag,
            bound,
            causality_pass: true,
            adequacy_pass: true,
            fraction_outside_negative: 0.0,
            fraction_outside_nonnegative: 0.0,
        }
    } else {
        residual_crosscorr(u, e, max_lag)?
    };
    Ok(ResidualReport {
        bound: autocorr.bound,
        whiteness_pass: autocorr.pass,
        causality_pass: crosscorr.causality_pass,
        autocorr,
        crosscorr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Arx,
    Iv,
    Armax,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Arx => "ARX",
            Method::Iv => "IV",
            Method::Armax => "ARMAX",
        }
    }
}

/// Estimator plus orders; `nc` is zero except for ARMAX.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateKey {
    pub method: Method,
    pub na: usize,
    pub nb: usize,
    pub nc: usize,
    pub nk: usize,
}

impl CandidateKey {
    pub fn n_params(&self) -> usize {
        self.na + self.nb + self.nc
    }
}

impl fmt::Display for CandidateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            Method::Armax => write!(f, "{} {}{}{}{}", self.method.tag(), self.na, self.nb, self.nc, self.nk),
            _ => write!(f, "{} {}{}{}", self.method.tag(), self.na, self.nb, self.nk),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// %, one-step fit on training data
    pub training_fit: f64,
    /// %, simulation fit on each validation record
    pub validation_fit: f64,
    pub max_lag: usize,
    /// Stage-2 RMSE limit as a fraction of the plant rate RMS.
    pub stage2_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { training_fit: 95.0, validation_fit: 55.0, max_lag: 25, stage2_ratio: 0.1 }
    }
}

/// Stage-1 evidence for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScores {
    pub key: CandidateKey,
    pub training_fit: f64,
    pub validation_prbs_fit: f64,
    pub validation_square_fit: f64,
    pub whiteness_pass: bool,
    pub causality_pass: bool,
    pub aic: f64,
}

impl CandidateScores {
    pub fn stage1_pass(&self, th: &Thresholds) -> bool {
        self.training_fit >= th.training_fit
            && self.validation_prbs_fit >= th.validation_fit
            && self.validation_square_fit >= th.validation_fit
            && self.whiteness_pass
            && self.causality_pass
    }
}

fn fit_or_floor(y: &Signal, y_hat: Result<Signal>) -> Result<f64> {
    match y_hat {
        Ok(s) => fit_percent(y, &s),
        // a diverging free-run is as bad a fit as it gets
        Err(Error::Simulation { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Residual RMS, relative to the measured output RMS, below which one-step
/// residuals are numerically zero: far under one count of a 16-bit sensor.
pub const NUMERICAL_ZERO: f64 = 1e-6;

/// Residual tests on one-step errors from `score_from` on; the predictor
/// runs from sample 0 so its start-up transient is excluded.
pub fn validation_residuals(m: &PolyModel, d: &Dataset, score_from: usize, max_lag: usize) -> Result<ResidualReport> {
    let vp = predict_one_step(m, d)?;
    let e = vp.residuals(&d.y);
    let from = score_from.max(vp.start);
    let drop = from - vp.start;
    let y = &d.y.samples[from.min(d.len())..];
    let y_rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt();
    residual_report_with_floor(&d.u.skip(from), &e.skip(drop), max_lag, NUMERICAL_ZERO * y_rms)
}

/// One-step fit on training data, free-run fits on both validation records,
/// residual tests on the validation-PRBS one-step residuals.
///
/// The validation records run from the experiment's rest state, so the
/// free runs start from zero initial conditions at sample 0; fits and
/// residuals are scored from `score_from` on.
pub fn score_candidate(
    key: CandidateKey,
    m: &PolyModel,
    training: &Dataset,
    validation_prbs: &Dataset,
    validation_square: &Dataset,
    score_from: usize,
    th: &Thresholds,
) -> Result<(CandidateScores, ResidualReport)> {
    let pred = predict_one_step(m, training)?;
    let training_fit = fit_percent(&training.y.skip(pred.start), &pred.y_hat)?;
    let free_fit = |d: &Dataset| {
        let from = score_from.min(d.len());
        fit_or_floor(&d.y.skip(from), simulate_model(m, &d.u, &[]).map(|s| s.skip(from)))
    };
    let validation_prbs_fit = free_fit(validation_prbs)?;
    let validation_square_fit = free_fit(validation_square)?;
    let report = validation_residuals(m, validation_prbs, score_from, th.max_lag)?;
    let aic = crate::estimation::aic(m, training)?;
    Ok((
        CandidateScores {
            key,
            training_fit,
            validation_prbs_fit,
            validation_square_fit,
            whiteness_pass: report.whiteness_pass,
            causality_pass: report.causality_pass,
            aic,
        },
        report,
    ))
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Replays the plant log's reference and excitation through the model in
/// the same loop and returns the rate RMSE against the log.
pub fn stage2_rmse(m: &PolyModel, plant_log: &DataLog, cascade: &CascadeConfig, skip: usize) -> Result<f64> {
    let mut plant = ModelPlant::new(m)?;
    let controller = match plant_log.header.loop_mode {
        LoopMode::Closed => Controller::Cascade(*cascade),
        LoopMode::Open => Controller::OpenLoop,
    };
    let replay = closedloop_simulate(
        &mut plant,
        &controller,
        &plant_log.signal("r")?,
        &plant_log.signal("d_s")?,
        RolloutOptions::default(),
    )?;
    let skip = skip.min(replay.len());
    Ok(rmse(&replay.y_rate[skip..], &plant_log.y_rate[skip..]))
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub key: CandidateKey,
    pub training_fit: f64,
    pub validation_prbs_fit: f64,
    pub validation_square_fit: f64,
    pub rmse: f64,
    pub mse: f64,
    pub whiteness_pass: bool,
    pub causality_pass: bool,
    pub stage1_pass: bool,
    pub stage2_pass: bool,
    pub aic: f64,
}

pub const COMPARISON_COLUMNS: [&str; 12] = [
    "model",
    "training_fit",
    "validation_prbs_fit",
    "validation_square_fit",
    "stage1",
    "stage2",
    "rmse",
    "mse",
    "whiteness",
    "causality",
    "aic",
    "n_params",
];

/// RMSE gap below which two candidates count as tied; ties go to the
/// smaller model, then to the key.
pub fn rmse_tie_tolerance(plant_rate_rms: f64) -> f64 {
    1e-9 * plant_rate_rms.max(f64::MIN_POSITIVE)
}

/// Ranks candidates: stage-1 passers by stage-2 RMSE (ties to the smaller
/// model, then the key), followed by the rest in key order. `rmse` entries
/// are ignored for stage-1 failures.
pub fn compare_models(
    scored: &[(CandidateScores, Option<f64>)],
    plant_rate_rms: f64,
    th: &Thresholds,
) -> Result<Vec<ComparisonRow>> {
    if scored.is_empty() {
        return Err(Error::Pipeline("no candidates to compare".into()));
    }
    let limit = th.stage2_ratio * plant_rate_rms;
    let mut rows: Vec<ComparisonRow> = scored
        .iter()
        .map(|(s, r)| {
            let stage1 = s.stage1_pass(th);
            let rmse = if stage1 { r.unwrap_or(f64::NAN) } else { f64::NAN };
            ComparisonRow {
                key: s.key,
                training_fit: s.training_fit,
                validation_prbs_fit: s.validation_prbs_fit,
                validation_square_fit: s.validation_square_fit,
                rmse,
                mse: rmse * rmse,
                whiteness_pass: s.whiteness_pass,
                causality_pass: s.causality_pass,
                stage1_pass: stage1,
                stage2_pass: stage1 && rmse <= limit,
                aic: s.aic,
            }
        })
        .collect();
    let finite = |r: &ComparisonRow| r.stage1_pass && r.rmse.is_finite();
    let best = rows.iter().filter(|r| finite(r)).map(|r| r.rmse).fold(f64::INFINITY, f64::min);
    let tol = rmse_tie_tolerance(plant_rate_rms);
    rows.sort_by(|x, y| {
        match (finite(x), finite(y)) {
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            (false, false) => return x.key.cmp(&y.key),
            (true, true) => {}
        }
        let (tx, ty) = (x.rmse <= best + tol, y.rmse <= best + tol);
        match (tx, ty) {
            (true, true) => x.key.n_params().cmp(&y.key.n_params()).then(x.key.cmp(&y.key)),
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => x.rmse.total_cmp(&y.rmse).then(x.key.cmp(&y.key)),
        }
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn white(n: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        Signal::new((0..n).map(|_| g.sample(&mut rng)).collect(), 0.004, "w").unwrap()
    }

    #[test]
    fn white_noise_passes() {
        let r = residual_autocorr(&white(10_000, 1), 25).unwrap();
        assert!(r.pass && !r.degenerate);
        assert!(r.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn constant_and_alternating_fail() {
        let n = 1000;
        let c = residual_autocorr(&Signal::new(vec![1.0; n], 1.0, "").unwrap(), 25).unwrap();
        assert!((c.values[0] - (n - 1) as f64 / n as f64).abs() < 1e-12);
        assert!(!c.pass);
        let alt: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = residual_autocorr(&Signal::new(alt, 1.0, "").unwrap(), 25).unwrap();
        assert!(a.values[0] < -0.99 && !a.pass);
    }

    #[test]
    fn zero_residuals_are_degenerate() {
        let r = residual_autocorr(&Signal::new(vec![0.0; 500], 1.0, "").unwrap(), 25).unwrap();
        assert!(r.degenerate && r.pass);
    }

    #[test]
    fn bound_shrinks_with_root_n() {
        assert!((confidence_bound(1000) / confidence_bound(2000) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn independent_signals_pass_both() {
        let c = residual_crosscorr(&white(10_000, 2), &white(10_000, 3), 25).unwrap();
        assert!(c.causality_pass && c.adequacy_pass);
    }

    #[test]
    fn lagged_input_spikes_on_the_right_side() {
        let u = white(5000, 4);
        let mut e = vec![0.0; 5000];
        e[3..].copy_from_slice(&u.samples[..4997]);
        // one spike in L + 1 lags must exceed the 5 % allowance, hence L = 10
        let c = residual_crosscorr(&u, &Signal::new(e, 0.004, "").unwrap(), 10).unwrap();
        assert!(c.at(3) > 0.9);
        assert!(c.causality_pass && !c.adequacy_pass);

        let mut e = vec![0.0; 5000];
        e[..4998].copy_from_slice(&u.samples[2..]);
        let c = residual_crosscorr(&u, &Signal::new(e, 0.004, "").unwrap(), 10).unwrap();
        assert!(c.at(-2) > 0.9);
        assert!(!c.causality_pass);
    }

    #[test]
    fn zero_energy_input_is_degenerate() {
        let z = Signal::new(vec![0.0; 1000], 0.004, "").unwrap();
        assert!(matches!(residual_crosscorr(&z, &white(1000, 5), 10), Err(Error::Degenerate(_))));
    }

    fn scores(method: Method, na: usize, fit: f64) -> CandidateScores {
        CandidateScores {
            key: CandidateKey { method, na, nb: 1, nc: 0, nk: 1 },
            training_fit: fit,
            validation_prbs_fit: fit,
            validation_square_fit: fit,
            whiteness_pass: true,
            causality_pass: true,
            aic: 0.0,
        }
    }

    #[test]
    fn ranking_orders_passers_by_rmse() {
        let th = Thresholds::default();
        let input = vec![
            (scores(Method::Arx, 4, 99.0), Some(0.03)),
            (scores(Method::Arx, 2, 50.0), Some(0.0)),
            (scores(Method::Iv, 3, 97.0), Some(0.01)),
            (scores(Method::Arx, 3, 100.0), Some(0.0)),
        ];
        let rows = compare_models(&input, 0.2, &th).unwrap();
        let order: Vec<String> = rows.iter().map(|r| r.key.to_string()).collect();
        assert_eq!(order, vec!["ARX 311", "IV 311", "ARX 411", "ARX 211"]);
        assert!(rows[3].rmse.is_nan() && !rows[3].stage1_pass);
        assert!(rows.iter().all(|r| r.mse.is_nan() || (r.mse - r.rmse * r.rmse).abs() < 1e-15));
        assert!(rows[0].stage2_pass && !rows[2].stage2_pass);
    }

    #[test]
    fn ties_go_to_smaller_model_then_key() {
        let th = Thresholds::default();
        let input = vec![
            (scores(Method::Iv, 3, 99.0), Some(0.0)),
            (scores(Method::Arx, 3, 99.0), Some(0.0)),
            (scores(Method::Arx, 5, 99.0), Some(0.0)),
        ];
        let rows = compare_models(&input, 1.0, &th).unwrap();
        assert_eq!(rows[0].key.to_string(), "ARX 311");
        assert_eq!(rows[1].key.to_string(), "IV 311");
        assert_eq!(compare_models(&input, 1.0, &th).unwrap(), rows);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(compare_models(&[], 1.0, &Thresholds::default()), Err(Error::Pipeline(_))));
    }

    #[test]
    fn key_labels() {
        let k = CandidateKey { method: Method::Armax, na: 3, nb: 3, nc: 3, nk: 1 };
        assert_eq!(k.to_string(), "ARMAX 3331");
        let k = CandidateKey { method: Method::Arx, na: 10, nb: 10, nc: 0, nk: 5 };
        assert_eq!(k.to_string(), "ARX 10105");
    }
}
