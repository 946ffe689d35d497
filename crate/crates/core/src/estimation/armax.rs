use nalgebra::{DMatrix, DVector};

use super::analysis::prediction_errors;
use super::arx::{estimate_arx, identifiability};
use super::data::{column_names, first_row, Dataset};
use super::model::{PolyModel, Structure};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, spectral_radius};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmaxOptions {
    pub max_iterations: usize,
    /// Converged when the largest parameter change drops below this.
    pub tolerance: f64,
    /// Gauss-Newton prediction-error steps run from the best ELS iterate.
    pub refine_iterations: usize,
}

impl Default for ArmaxOptions {
    fn default() -> Self {
        ArmaxOptions { max_iterations: 200, tolerance: 1e-8, refine_iterations: 50 }
    }
}

fn cost(e: &[f64], start: usize) -> f64 {
    e[start..].iter().map(|v| v * v).sum::<f64>() / (e.len() - start) as f64
}

/// Pulls the roots of `C` inside the unit circle so that `1/C` stays stable.
fn stabilize(c: &mut [f64]) {
    if c.is_empty() {
        return;
    }
    let n = c.len();
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -c[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let rho = spectral_radius(&companion);
    if rho >= 0.99 {
        let s = 0.98 / rho;
        let mut f = 1.0;
        for ci in c.iter_mut() {
            f *= s;
            *ci *= f;
        }
    }
}

/// Extended least squares: regress on `[−y lags, u lags, ê lags]`, refresh
/// `ê` through `1/C`, repeat. The lowest-cost iterate (the ARX start
/// included) is then polished by Gauss-Newton on the prediction-error cost;
/// the cheaper of the two is returned.
pub fn estimate_armax(d: &Dataset, na: usize, nb: usize, nc: usize, nk: usize, opts: ArmaxOptions) -> Result<PolyModel> {
    if nc == 0 {
        return Err(Error::Config("nc = 0 is an ARX structure; use estimate_arx".into()));
    }
    let init = estimate_arx(d, na, nb, nk)?;
    let start = first_row(na, nb, nk).max(nc);
    let n = d.len();
    let params = na + nb + nc;
    if n <= start || n - start < params {
        return Err(Error::Data(format!("{n} samples are too few for ARMAX ({na}, {nb}, {nc}, {nk})")));
    }
    let (u, y) = (&d.u.samples, &d.y.samples);

    let mut model = PolyModel {
        structure: Structure::Armax,
        c: vec![0.0; nc],
        param_covariance: DMatrix::zeros(0, 0),
        ..init
    };
    let (_, mut e) = prediction_errors(&model, u, y);
    let mut best = (cost(&e, start), model.clone());
    let mut theta_prev: Vec<f64> = model.a.iter().chain(&model.b).chain(&model.c).copied().collect();
    let names: Vec<String> = column_names(na, nb, nk)
        .into_iter()
        .chain((1..=nc).map(|i| format!("e(t-{i})")))
        .collect();
    let target = DVector::from_iterator(n - start, y[start..].iter().copied());

    let mut els_converged = false;
    for iter in 1..=opts.max_iterations {
        let phi = DMatrix::from_fn(n - start, params, |r, col| {
            let t = start + r;
            if col < na {
                -y[t - 1 - col]
            } else if col < na + nb {
                u[t - nk - (col - na)]
            } else {
                e[t - 1 - (col - na - nb)]
            }
        });
        let ls = lstsq(&phi, &target).map_err(|defect| identifiability(defect, &names))?;
        let th = ls.theta.as_slice();
        model.a = th[..na].to_vec();
        model.b = th[na..na + nb].to_vec();
        model.c = th[na + nb..].to_vec();
        stabilize(&mut model.c);
        let (_, e_new) = prediction_errors(&model, u, y);
        e = e_new;
        let j = cost(&e, start);
        let dof = (n - start).saturating_sub(params).max(1) as f64;
        model.noise_variance = j * (n - start) as f64 / dof;
        model.param_covariance = ls.gram_inverse * model.noise_variance;
        if j.is_finite() && j < best.0 {
            best = (j, model.clone());
        }
        let theta: Vec<f64> = model.a.iter().chain(&model.b).chain(&model.c).copied().collect();
        let step = theta.iter().zip(&theta_prev).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        theta_prev = theta;
        if !j.is_finite() {
            return Err(Error::Estimation {
                message: "prediction errors became non-finite".into(),
                iterations: iter,
                best: Box::new(finish(best.1, best.0, n - start, params)),
            });
        }
        if step < opts.tolerance {
            els_converged = true;
            break;
        }
    }

    let (j_els, els) = best;
    let (refined, j_gn, gn_converged) = gauss_newton(els.clone(), u, y, start, opts);
    let (model, j) = if j_gn < j_els { (refined, j_gn) } else { (els, j_els) };
    if els_converged || gn_converged {
        Ok(finish(model, j, n - start, params))
    } else {
        Err(Error::Estimation {
            message: format!("no convergence to {:e} within {} iterations", opts.tolerance, opts.max_iterations),
            iterations: opts.max_iterations,
            best: Box::new(finish(model, j, n - start, params)),
        })
    }
}

/// `x / C` with zero initial conditions.
fn filter_c(c: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for t in 0..x.len() {
        let mut v = x[t];
        for (i, ci) in c.iter().enumerate() {
            if t > i {
                v -= ci * out[t - 1 - i];
            }
        }
        out[t] = v;
    }
    out
}

const GN_RADIUS: f64 = 0.999;

fn c_radius(c: &[f64]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let n = c.len();
    spectral_radius(&DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -c[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    }))
}

/// Damped Gauss-Newton on the one-step prediction-error cost. A step that
/// puts a root of `C` outside radius 0.999 is scaled back onto that disc.
fn gauss_newton(mut m: PolyModel, u: &[f64], y: &[f64], start: usize, opts: ArmaxOptions) -> (PolyModel, f64, bool) {
    let (na, nb, nc, nk) = (m.na(), m.nb(), m.nc(), m.nk);
    let params = na + nb + nc;
    let rows = y.len() - start;
    let (_, mut e) = prediction_errors(&m, u, y);
    let mut j = cost(&e, start);
    for _ in 0..opts.refine_iterations {
        let yf = filter_c(&m.c, y);
        let uf = filter_c(&m.c, u);
        let ef = filter_c(&m.c, &e);
        // negative gradient of e(t) with respect to [a, b, c]
        let psi = DMatrix::from_fn(rows, params, |r, col| {
            let t = start + r;
            if col < na {
                -yf[t - 1 - col]
            } else if col < na + nb {
                uf[t - nk - (col - na)]
            } else {
                ef[t - 1 - (col - na - nb)]
            }
        });
        let rhs = DVector::from_iterator(rows, e[start..].iter().copied());
        let Ok(ls) = lstsq(&psi, &rhs) else { return (m, j, false) };
        let mut mu = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial = m.clone();
            let d = ls.theta.as_slice();
            for (p, dp) in trial.a.iter_mut().chain(trial.b.iter_mut()).chain(trial.c.iter_mut()).zip(d) {
                *p += mu * dp;
            }
            let rho = c_radius(&trial.c);
            if rho >= GN_RADIUS {
                // pull the roots back onto the admissible disc
                let s = GN_RADIUS * (1.0 - 1e-9) / rho;
                let mut f = 1.0;
                for ci in trial.c.iter_mut() {
                    f *= s;
                    *ci *= f;
                }
            }
            {
                let (_, e_t) = prediction_errors(&trial, u, y);
                let j_t = cost(&e_t, start);
                if j_t.is_finite() && j_t <= j {
                    let dof = rows.saturating_sub(params).max(1) as f64;
                    trial.param_covariance = ls.gram_inverse.clone() * (j_t * rows as f64 / dof);
                    accepted = Some((trial, e_t, j_t, mu));
                    break;
                }
            }
            mu *= 0.5;
        }
        let Some((trial, e_t, j_t, mu)) = accepted else { return (m, j, true) };
        let step = ls.theta.iter().fold(0.0f64, |acc, v| acc.max((mu * v).abs()));
        let gain = (j - j_t) / j.max(f64::MIN_POSITIVE);
        m = trial;
        e = e_t;
        j = j_t;
        if step < opts.tolerance || gain < 1e-10 {
            return (m, j, true);
        }
    }
    (m, j, false)
}

fn finish(mut m: PolyModel, cost: f64, rows: usize, params: usize) -> PolyModel {
    m.noise_variance = cost * rows as f64 / rows.saturating_sub(params).max(1) as f64;
    let d = m.n_params();
    if m.param_covariance.nrows() != d {
        m.param_covariance = DMatrix::zeros(0, 0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn armax_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        let u: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
        let e: Vec<f64> = (0..n).map(|_| 0.5 * g.sample(&mut rng)).collect();
        let mut y = vec![0.0; n];
        for t in 1..n {
            y[t] = 0.6 * y[t - 1] + u[t - 1] + e[t] + 0.4 * e[t - 1];
        }
        Dataset::from_vecs(u, y, 0.01).unwrap()
    }

    #[test]
    fn recovers_known_armax() {
        let m = estimate_armax(&armax_data(100_000, 11), 1, 1, 1, 1, ArmaxOptions::default()).unwrap();
        assert!((m.a[0] + 0.6).abs() < 0.02, "a = {:?}", m.a);
        assert!((m.b[0] - 1.0).abs() < 0.02, "b = {:?}", m.b);
        assert!((m.c[0] - 0.4).abs() < 0.02, "c = {:?}", m.c);
    }

    #[test]
    fn cost_never_exceeds_arx_start() {
        let d = armax_data(3000, 12);
        let arx = estimate_arx(&d, 2, 2, 1).unwrap();
        let m = match estimate_armax(&d, 2, 2, 1, 1, ArmaxOptions::default()) {
            Ok(m) => m,
            Err(Error::Estimation { best, .. }) => *best,
            Err(e) => panic!("{e}"),
        };
        let start = first_row(2, 2, 1).max(1);
        let (_, e_arx) = prediction_errors(&arx, &d.u.samples, &d.y.samples);
        let (_, e_mx) = prediction_errors(&m, &d.u.samples, &d.y.samples);
        assert!(cost(&e_mx, start) <= cost(&e_arx, start));
    }

    #[test]
    fn zero_nc_rejected() {
        assert!(matches!(
            estimate_armax(&armax_data(100, 1), 1, 1, 0, 1, ArmaxOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn iteration_cap_returns_best() {
        let d = armax_data(2000, 13);
        let opts = ArmaxOptions { max_iterations: 1, tolerance: 0.0, refine_iterations: 0 };
        match estimate_armax(&d, 1, 1, 1, 1, opts) {
            Err(Error::Estimation { best, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(best.structure, Structure::Armax);
            }
            other => panic!("expected estimation error, got {other:?}"),
        }
    }

    #[test]
    fn stabilize_reflects_large_roots() {
        let mut c = vec![-2.5, 1.0];
        stabilize(&mut c);
        let comp = DMatrix::from_row_slice(2, 2, &[-c[0], -c[1], 1.0, 0.0]);
        assert!(spectral_radius(&comp) < 0.99);
    }
}
