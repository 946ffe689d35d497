use nalgebra::{DMatrix, DVector};

use super::analysis::simulate_model;
use super::data::{build_regressors, Dataset, Regression};
use super::model::{PolyModel, Structure};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, solve_square, RankDeficiency};

pub(crate) fn identifiability(defect: RankDeficiency, names: &[String]) -> Error {
    Error::Identifiability {
        message: format!("regressor matrix has numerical rank {} of {}", defect.rank, names.len()),
        columns: defect.deficient.iter().map(|&i| names[i].clone()).collect(),
    }
}

fn unbiased_variance(residuals: &DVector<f64>, params: usize) -> f64 {
    let dof = residuals.len().saturating_sub(params).max(1);
    residuals.norm_squared() / dof as f64
}

fn split(theta: &DVector<f64>, na: usize) -> (Vec<f64>, Vec<f64>) {
    (theta.as_slice()[..na].to_vec(), theta.as_slice()[na..].to_vec())
}

/// Least-squares ARX fit by pivoted QR of the regressor matrix.
pub fn estimate_arx(d: &Dataset, na: usize, nb: usize, nk: usize) -> Result<PolyModel> {
    let reg = build_regressors(d, na, nb, nk)?;
    let ls = lstsq(&reg.phi, &reg.y).map_err(|e| identifiability(e, &reg.column_names))?;
    let var = unbiased_variance(&ls.residuals, na + nb);
    let (a, b) = split(&ls.theta, na);
    Ok(PolyModel {
        structure: Structure::Arx,
        a,
        b,
        c: Vec::new(),
        nk,
        sample_time: d.sample_time(),
        noise_variance: var,
        param_covariance: ls.gram_inverse * var,
    })
}

/// Instruments: the regressor with lagged `y` replaced by lagged noise-free
/// simulated output `x`.
fn instruments(reg: &Regression, x: &[f64], na: usize) -> DMatrix<f64> {
    let mut z = reg.phi.clone();
    for r in 0..z.nrows() {
        let t = reg.start + r;
        for i in 0..na {
            z[(r, i)] = -x[t - 1 - i];
        }
    }
    z
}

/// Two-stage instrumental variables seeded by an ARX fit.
pub fn estimate_iv(d: &Dataset, na: usize, nb: usize, nk: usize) -> Result<PolyModel> {
    let init = estimate_arx(d, na, nb, nk)?;
    let reg = build_regressors(d, na, nb, nk)?;
    let x = simulate_model(&init, &d.u, &[]).map_err(|e| Error::Identifiability {
        message: format!("instrument simulation of the initial ARX model failed: {e}"),
        columns: Vec::new(),
    })?;
    let z = instruments(&reg, &x.samples, na);
    let zt = z.transpose();
    let zphi = &zt * &reg.phi;
    let zy = &zt * &reg.y;
    let theta = match solve_square(&zphi, &DMatrix::from_column_slice(zy.len(), 1, zy.as_slice())) {
        Some(t) => t.column(0).into_owned(),
        None => {
            // name the culprits through the instrument matrix's own rank profile
            let columns = match lstsq(&z, &reg.y) {
                Err(defect) => defect.deficient.iter().map(|&i| reg.column_names[i].clone()).collect(),
                Ok(_) => Vec::new(),
            };
            return Err(Error::Identifiability {
                message: "instrument cross-product matrix is singular".into(),
                columns,
            });
        }
    };
    let residuals = &reg.y - &reg.phi * &theta;
    let var = unbiased_variance(&residuals, na + nb);
    // σ² (ZᵀΦ)⁻¹ ZᵀZ (ZᵀΦ)⁻ᵀ
    let inv = solve_square(&zphi, &DMatrix::identity(na + nb, na + nb)).unwrap_or_else(|| DMatrix::zeros(0, 0));
    let cov = if inv.nrows() == na + nb { &inv * (&zt * &z) * inv.transpose() * var } else { inv };
    let (a, b) = split(&theta, na);
    Ok(PolyModel {
        structure: Structure::Arx,
        a,
        b,
        c: Vec::new(),
        nk,
        sample_time: d.sample_time(),
        noise_variance: var,
        param_covariance: cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::analysis::{predict_one_step, simulate_model};
    use crate::signal::Signal;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn white(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct difference-equation oracle, independent of `simulate_model`.
    fn difference_equation(a: &[f64], b: &[f64], u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        for t in 0..u.len() {
            let mut v = 0.0;
            for (i, ai) in a.iter().enumerate().skip(1) {
                if t >= i {
                    v -= ai * y[t - i];
                }
            }
            for (j, bj) in b.iter().enumerate() {
                if t >= j {
                    v += bj * u[t - j];
                }
            }
            y[t] = v;
        }
        y
    }

    fn dataset(u: Vec<f64>, y: Vec<f64>) -> Dataset {
        Dataset::from_vecs(u, y, 0.004).unwrap()
    }

    #[test]
    fn recovers_first_order_system() {
        let u = white(500, 1);
        let y = difference_equation(&[1.0, -0.7], &[0.0, 0.5], &u);
        let m = estimate_arx(&dataset(u, y), 1, 1, 1).unwrap();
        assert!((m.a[0] + 0.7).abs() < 1e-8);
        assert!((m.b[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn pure_delay_recovered() {
        let u = white(300, 2);
        let mut y = vec![0.0; 300];
        y[1..].copy_from_slice(&u[..299]);
        let m = estimate_arx(&dataset(u, y), 2, 1, 1).unwrap();
        assert!((m.b[0] - 1.0).abs() < 1e-10);
        assert!(m.a.iter().all(|a| a.abs() < 1e-10));
    }

    #[test]
    fn collinear_input_reports_columns() {
        let d = dataset(vec![1.0; 100], white(100, 3));
        match estimate_arx(&d, 1, 2, 1) {
            Err(Error::Identifiability { columns, .. }) => {
                assert_eq!(columns.len(), 1);
                assert!(columns[0].starts_with("u(t-"));
            }
            other => panic!("expected identifiability error, got {other:?}"),
        }
    }

    #[test]
    fn iv_matches_arx_on_noiseless_data() {
        let u = white(800, 4);
        let y = difference_equation(&[1.0, -1.5, 0.7], &[0.0, 1.0, 0.5], &u);
        let d = dataset(u, y);
        let (ls, iv) = (estimate_arx(&d, 2, 2, 1).unwrap(), estimate_iv(&d, 2, 2, 1).unwrap());
        for (p, q) in ls.a.iter().chain(&ls.b).zip(iv.a.iter().chain(&iv.b)) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let u = white(1000, 5);
        let mut y = difference_equation(&[1.0, -0.8], &[0.0, 0.0, 0.4], &u);
        for (v, n) in y.iter_mut().zip(white(1000, 6)) {
            *v += 0.1 * n;
        }
        let d = dataset(u, y);
        let m = estimate_arx(&d, 2, 2, 2).unwrap();
        let p = predict_one_step(&m, &d).unwrap();
        let e = p.residuals(&d.y);
        let reg = build_regressors(&d, 2, 2, 2).unwrap();
        for c in 0..reg.phi.ncols() {
            let col = reg.phi.column(c);
            let dot: f64 = col.iter().zip(&e.samples).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-8 * col.norm() * e.samples.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        // residual variance agrees with the estimator's report
        let ss: f64 = e.samples.iter().map(|v| v * v).sum();
        assert!((ss / (e.len() - 4) as f64 - m.noise_variance).abs() < 1e-12);
    }

    #[test]
    fn consistency_improves_with_data() {
        let truth = [-0.7, 0.5];
        let err_at = |n: usize, seed: u64| {
            // white equation error keeps least squares consistent
            let u = white(n, seed);
            let e = white(n, seed + 1000);
            let mut y = vec![0.0; n];
            for t in 1..n {
                y[t] = 0.7 * y[t - 1] + 0.5 * u[t - 1] + 0.3 * e[t];
            }
            let m = estimate_arx(&dataset(u, y), 1, 1, 1).unwrap();
            ((m.a[0] - truth[0]).powi(2) + (m.b[0] - truth[1]).powi(2)).sqrt()
        };
        let median = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let small = median((0..20).map(|s| err_at(200, s)).collect());
        let large = median((0..20).map(|s| err_at(3200, s)).collect());
        assert!(large < small, "median error {large} at 16N vs {small} at N");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn simulate_then_estimate_is_identity(
            a1 in -0.9f64..0.9, b0 in 0.1f64..2.0, b1 in -1.0f64..1.0, nk in 1usize..4, seed in 0u64..1000,
        ) {
            let m = PolyModel::arx(vec![a1], vec![b0, b1], nk, 0.01).unwrap();
            let u = Signal::new(white(400, seed), 0.01, "u").unwrap();
            let y = simulate_model(&m, &u, &[]).unwrap();
            let est = estimate_arx(&Dataset::from_vecs(u.samples, y.samples, 0.01).unwrap(), 1, 2, nk).unwrap();
            prop_assert!((est.a[0] - a1).abs() < 1e-8);
            prop_assert!((est.b[0] - b0).abs() < 1e-8 && (est.b[1] - b1).abs() < 1e-8);
        }

        #[test]
        fn input_scaling_scales_b(alpha in 0.1f64..10.0, seed in 0u64..1000) {
            let u = white(300, seed);
            let y = difference_equation(&[1.0, -0.5, 0.1], &[0.0, 1.0, -0.3], &u);
            let base = estimate_arx(&dataset(u.clone(), y.clone()), 2, 2, 1).unwrap();
            let scaled = estimate_arx(&dataset(u.iter().map(|v| v * alpha).collect(), y), 2, 2, 1).unwrap();
            for (p, q) in base.a.iter().zip(&scaled.a) {
                prop_assert!((p - q).abs() < 1e-8);
            }
            for (p, q) in base.b.iter().zip(&scaled.b) {
                prop_assert!((p / alpha - q).abs() < 1e-8 * (1.0 + p.abs()));
            }
        }
    }
}
