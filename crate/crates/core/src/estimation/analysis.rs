use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::data::{first_row, Dataset};
use super::model::PolyModel;
use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::signal::Signal;

/// One-step-ahead prediction, defined from sample `start` on.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub start: usize,
    pub y_hat: Signal,
}

impl Prediction {
    /// Measured minus predicted over the defined span.
    pub fn residuals(&self, y: &Signal) -> Signal {
        let e = y.samples[self.start..]
            .iter()
            .zip(&self.y_hat.samples)
            .map(|(a, b)| a - b)
            .collect();
        Signal { samples: e, sample_time: y.sample_time, label: "residual".into() }
    }
}

pub(crate) fn prediction_start(m: &PolyModel) -> usize {
    first_row(m.na(), m.nb(), m.nk).max(m.nc())
}

/// Prediction errors `e(t)` for `t ≥ start`, with `e = 0` before. ARMAX
/// noise is reconstructed recursively through `1/C`; the `nc` noise values
/// preceding `start` are unknown and are set by least squares, which keeps
/// a slowly decaying start-up transient out of the errors when `C` has roots
/// near the unit circle.
pub(crate) fn prediction_errors(m: &PolyModel, u: &[f64], y: &[f64]) -> (usize, Vec<f64>) {
    let start = prediction_start(m);
    let mut e = vec![0.0; y.len()];
    for t in start..y.len() {
        let mut pred = 0.0;
        for (i, a) in m.a.iter().enumerate() {
            pred -= a * y[t - 1 - i];
        }
        for (j, b) in m.b.iter().enumerate() {
            pred += b * u[t - m.nk - j];
        }
        for (i, c) in m.c.iter().enumerate() {
            pred += c * e[t - 1 - i];
        }
        e[t] = y[t] - pred;
    }
    // with few rows the initial values would simply absorb the first errors
    if !m.c.is_empty() && y.len() >= start + 10 * m.c.len() {
        correct_initial_noise(&m.c, start, &mut e);
    }
    (start, e)
}

fn correct_initial_noise(c: &[f64], start: usize, e: &mut [f64]) {
    let nc = c.len();
    let rows = e.len() - start;
    // response of 1/C to a unit noise value at start-1-j
    let mut h = DMatrix::zeros(rows, nc);
    for j in 0..nc {
        let mut past = vec![0.0; nc];
        past[j] = 1.0;
        for r in 0..rows {
            let v: f64 = -c.iter().zip(&past).map(|(ci, p)| ci * p).sum::<f64>();
            h[(r, j)] = v;
            past.rotate_right(1);
            past[0] = v;
        }
    }
    if !h.iter().all(|v| v.is_finite()) {
        return;
    }
    let target = DVector::from_iterator(rows, e[start..].iter().map(|v| -v));
    if let Ok(ls) = lstsq(&h, &target) {
        let fix = &h * &ls.theta;
        for (r, f) in fix.iter().enumerate() {
            e[start + r] += f;
        }
    }
}

pub fn predict_one_step(m: &PolyModel, d: &Dataset) -> Result<Prediction> {
    if (m.sample_time - d.sample_time()).abs() > 1e-12 * m.sample_time {
        return Err(Error::Data(format!(
            "model sample time {} differs from data sample time {}",
            m.sample_time,
            d.sample_time()
        )));
    }
    let (start, e) = prediction_errors(m, &d.u.samples, &d.y.samples);
    if start >= d.len() {
        return Err(Error::Data(format!("{} samples are too few for this model", d.len())));
    }
    let y_hat = (start..d.len()).map(|t| d.y.samples[t] - e[t]).collect();
    Ok(Prediction { start, y_hat: Signal::new(y_hat, d.sample_time(), "y_hat")? })
}

/// Free-run simulation driven by `u` alone. `y0` lists past outputs, most
/// recent first (`y(−1), y(−2), …`); missing history is zero, as is `u` before 0.
pub fn simulate_model(m: &PolyModel, u: &Signal, y0: &[f64]) -> Result<Signal> {
    let bound = 1e6 * u.samples.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let n = u.len();
    let na = m.na();
    let mut y = vec![0.0; n];
    let past = |y: &[f64], t: usize, i: usize| -> f64 {
        // y(t - i) with i >= 1
        if t >= i {
            y[t - i]
        } else {
            y0.get(i - t - 1).copied().unwrap_or(0.0)
        }
    };
    for t in 0..n {
        let mut v = 0.0;
        for i in 1..=na {
            v -= m.a[i - 1] * past(&y, t, i);
        }
        for (j, b) in m.b.iter().enumerate() {
            let lag = m.nk + j;
            if t >= lag {
                v += b * u.samples[t - lag];
            }
        }
        if !(v.abs() <= bound) {
            return Err(Error::Simulation {
                step: t,
                message: format!("|y| = {:.3e} exceeds bound {bound:.3e}", v.abs()),
            });
        }
        y[t] = v;
    }
    Signal::new(y, u.sample_time, "y_sim")
}

/// `100 · (1 − ‖y − ŷ‖ / ‖y − ȳ‖)`.
pub fn fit_percent(y: &Signal, y_hat: &Signal) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Data(format!("lengths differ: {} vs {}", y.len(), y_hat.len())));
    }
    let mean = y.mean();
    let den: f64 = y.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::UndefinedFit);
    }
    let num: f64 = y
        .samples
        .iter()
        .zip(&y_hat.samples)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * (1.0 - num / den))
}

fn poly_at(coeffs: &[f64], z_inv: Complex64) -> Complex64 {
    // Horner in z⁻¹
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z_inv + c)
}

/// `G(e^{jωTs}) = B/A` on a grid of angular frequencies below Nyquist.
pub fn frequency_response(m: &PolyModel, omegas: &[f64]) -> Result<Vec<Complex64>> {
    let nyquist = std::f64::consts::PI / m.sample_time;
    let (a, b) = (m.a_poly(), m.b_poly());
    omegas
        .iter()
        .map(|&w| {
            if !(w >= 0.0 && w < nyquist) {
                return Err(Error::Domain(format!(
                    "frequency {w} rad/s outside [0, {nyquist}) rad/s"
                )));
            }
            let z_inv = Complex64::from_polar(1.0, -w * m.sample_time);
            Ok(poly_at(&b, z_inv) / poly_at(&a, z_inv))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodePoint {
    pub omega: f64,
    pub magnitude_db: f64,
    /// Unwrapped along the grid.
    pub phase_deg: f64,
}

pub fn bode(m: &PolyModel, omegas: &[f64]) -> Result<Vec<BodePoint>> {
    let g = frequency_response(m, omegas)?;
    let mut out = Vec::with_capacity(g.len());
    let mut prev: Option<f64> = None;
    for (&w, z) in omegas.iter().zip(&g) {
        let mut ph = z.arg();
        if let Some(p) = prev {
            let tau = 2.0 * std::f64::consts::PI;
            ph -= tau * ((ph - p) / tau).round();
        }
        prev = Some(ph);
        out.push(BodePoint {
            omega: w,
            magnitude_db: 20.0 * z.norm().log10(),
            phase_deg: ph.to_degrees(),
        });
    }
    Ok(out)
}

/// `N · ln(V) + 2d` with `V` the mean squared prediction error.
pub fn aic(m: &PolyModel, d: &Dataset) -> Result<f64> {
    let p = predict_one_step(m, d)?;
    let e = p.residuals(&d.y);
    let v = e.samples.iter().map(|x| x * x).sum::<f64>() / e.len() as f64;
    Ok(e.len() as f64 * v.ln() + 2.0 * m.n_params() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sig(v: Vec<f64>) -> Signal {
        Signal::new(v, 1.0, "").unwrap()
    }

    #[test]
    fn pure_delay_prediction() {
        let m = PolyModel::from_polynomials(&[1.0], &[0.0, 1.0], 1.0).unwrap();
        let u: Vec<f64> = (0..10).map(|k| (k as f64).cos()).collect();
        let d = Dataset::from_vecs(u.clone(), vec![0.0; 10], 1.0).unwrap();
        let p = predict_one_step(&m, &d).unwrap();
        assert_eq!(p.start, 1);
        assert_eq!(p.y_hat.samples, u[..9].to_vec());
    }

    #[test]
    fn geometric_impulse_response() {
        let m = PolyModel::from_polynomials(&[1.0, -0.5], &[0.0, 1.0], 1.0).unwrap();
        let mut u = vec![0.0; 6];
        u[0] = 1.0;
        let y = simulate_model(&m, &sig(u), &[]).unwrap();
        assert_eq!(y.samples, vec![0.0, 1.0, 0.5, 0.25, 0.125, 0.0625]);
    }

    #[test]
    fn zero_b_simulates_to_zero() {
        let m = PolyModel::arx(vec![-0.9], vec![0.0], 1, 1.0).unwrap();
        let y = simulate_model(&m, &sig(vec![1.0; 20]), &[]).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unstable_model_diverges() {
        let m = PolyModel::arx(vec![-1.5], vec![1.0], 1, 1.0).unwrap();
        let r = simulate_model(&m, &sig(vec![1.0; 200]), &[]);
        assert!(matches!(r, Err(Error::Simulation { .. })));
    }

    #[test]
    fn initial_conditions_are_used() {
        let m = PolyModel::arx(vec![-0.5], vec![0.0], 1, 1.0).unwrap();
        let y = simulate_model(&m, &sig(vec![0.0; 3]), &[8.0]).unwrap();
        assert_eq!(y.samples, vec![4.0, 2.0, 1.0]);
    }

    #[test]
    fn fit_examples() {
        let y = sig(vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(fit_percent(&y, &y).unwrap(), 100.0);
        assert_eq!(fit_percent(&y, &sig(vec![0.0; 4])).unwrap(), 0.0);
        assert!(matches!(fit_percent(&sig(vec![2.0; 4]), &y), Err(Error::UndefinedFit)));
        assert!(fit_percent(&y, &sig(vec![-1.0, 1.0, -1.0, 1.0])).unwrap() < 0.0);
    }

    #[test]
    fn unit_and_delay_responses() {
        let one = PolyModel::from_polynomials(&[1.0], &[1.0], 0.01).unwrap();
        for g in frequency_response(&one, &[0.0, 1.0, 100.0, 300.0]).unwrap() {
            assert!((g - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let delay = PolyModel::arx(vec![], vec![0.3], 3, 0.01).unwrap();
        let ws = [1.0, 10.0, 50.0];
        let pts = bode(&delay, &ws).unwrap();
        for (p, w) in pts.iter().zip(ws) {
            assert!((p.magnitude_db - 20.0 * 0.3f64.log10()).abs() < 1e-12);
            assert!((p.phase_deg.to_radians() + 3.0 * w * 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn nyquist_is_rejected() {
        let m = PolyModel::arx(vec![], vec![1.0], 1, 0.01).unwrap();
        assert!(matches!(frequency_response(&m, &[PI / 0.01]), Err(Error::Domain(_))));
    }

    #[test]
    fn dc_gain_is_coefficient_ratio() {
        let m = PolyModel::from_polynomials(&[1.0, -0.6, 0.08], &[0.0, 0.5, 0.25], 0.1).unwrap();
        let g = frequency_response(&m, &[0.0]).unwrap()[0];
        assert!((g.re - 0.75 / 0.48).abs() < 1e-12 && g.im.abs() < 1e-15);
    }

    #[test]
    fn armax_prediction_filters_through_c() {
        let m = PolyModel::armax(vec![-0.6], vec![1.0], vec![0.4], 1, 1.0).unwrap();
        let u = vec![1.0, 0.0, 0.0, 0.0];
        let y = vec![0.0, 2.0, 1.0, 0.0];
        let (start, e) = prediction_errors(&m, &u, &y);
        assert_eq!(start, 1);
        // e1 = 2 - 1 = 1; e2 = 1 - 1.2 - 0.4 = -0.6; e3 = 0 - 0.6 + 0.24
        let want = [0.0, 1.0, -0.6, -0.36];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn initial_noise_state_is_estimated() {
        // y = C e with C = 1 - 0.999 z^-1 and a large noise value before the record
        let m = PolyModel::armax(vec![], vec![0.0], vec![-0.999], 1, 1.0).unwrap();
        let n = 2000;
        let mut s = 7u64;
        let noise: Vec<f64> = (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        let mut noise = noise;
        noise[0] = 50.0;
        let mut y = vec![0.0; n];
        for t in 1..n {
            y[t] = noise[t] - 0.999 * noise[t - 1];
        }
        let (start, e) = prediction_errors(&m, &vec![0.0; n], &y);
        assert_eq!(start, 1);
        let err = (start..n).map(|t| (e[t] - noise[t]).powi(2)).sum::<f64>() / (n - start) as f64;
        assert!(err < 1e-3, "mean square error {err}");
    }
}
