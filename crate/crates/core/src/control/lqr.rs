use nalgebra::DMatrix;

use super::statespace::StateSpace;
use crate::error::{Error, Result};
use crate::linalg::{norm_inf, solve_square, spectral_radius};

/// Riccati residual a design must certify.
pub const RICCATI_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct Lqr {
    /// `u = −K x`
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// ∞-norm of the Riccati equation residual at return.
    pub residual: f64,
    /// Fixed-point polish steps after the doubling solve.
    pub iterations: usize,
    /// Of `A − B K`.
    pub spectral_radius: f64,
}

fn gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let bt_p = b.transpose() * p;
    solve_square(&(r + &bt_p * b), &(bt_p * a))
}

fn riccati_map(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = gain(a, b, r, p)?;
    let at_p = a.transpose() * p;
    let next = &at_p * a - &at_p * b * k + q;
    // keep P symmetric against rounding drift
    Some((&next + next.transpose()) * 0.5)
}

const DOUBLING_STEPS: usize = 64;

/// Structure-preserving doubling: `H_k` converges quadratically to the
/// stabilizing solution. `None` when a step is singular or blows up.
fn doubling(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let r_inv_bt = solve_square(r, &b.transpose())?;
    let (mut ak, mut g, mut h) = (a.clone(), b * r_inv_bt, q.clone());
    for _ in 0..DOUBLING_STEPS {
        let w = &eye + &g * &h;
        let w_a = solve_square(&w, &ak)?;
        let w_g = solve_square(&w, &g)?;
        let h_next = &h + ak.transpose() * &h * &w_a;
        let g_next = &g + &ak * w_g * ak.transpose();
        ak = &ak * w_a;
        let h_next = (&h_next + h_next.transpose()) * 0.5;
        g = (&g_next + g_next.transpose()) * 0.5;
        if !h_next.iter().chain(g.iter()).chain(ak.iter()).all(|v| v.is_finite()) {
            return None;
        }
        let step = norm_inf(&(&h_next - &h));
        h = h_next;
        if step <= 4.0 * f64::EPSILON * norm_inf(&h) {
            return Some(h);
        }
    }
    None
}

/// Discrete LQR: a doubling solve, then the fixed-point Riccati map as a
/// polish. Falls back to plain iteration from `P₀ = Q` if doubling fails.
pub fn lqr_design(sys: &StateSpace, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Lqr> {
    let (a, b) = (&sys.a, &sys.b);
    let (n, m) = (a.nrows(), b.ncols());
    if q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Design(format!(
            "Q must be {n}x{n} and R {m}x{m}, got {:?} and {:?}",
            q.shape(),
            r.shape()
        )));
    }
    if r.clone().cholesky().is_none() {
        return Err(Error::Design("R must be positive definite".into()));
    }
    let singular = || Error::Design("R + BᵀPB became singular".into());
    let mut p = doubling(a, b, q, r).unwrap_or_else(|| q.clone());
    for iter in 1..=MAX_ITERATIONS {
        let next = riccati_map(a, b, q, r, &p).ok_or_else(singular)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Design(format!("Riccati iteration diverged after {iter} steps")));
        }
        let step = norm_inf(&(&next - &p));
        p = next;
        // iterate well past the certificate level, down to rounding noise
        let target = (1e-3 * RICCATI_TOLERANCE).max(64.0 * f64::EPSILON * norm_inf(&p));
        if step < target {
            let residual = norm_inf(&(riccati_map(a, b, q, r, &p).ok_or_else(singular)? - &p));
            let k = gain(a, b, r, &p).ok_or_else(singular)?;
            let rho = spectral_radius(&(a - b * &k));
            if rho >= 1.0 {
                return Err(Error::Design(format!("closed-loop spectral radius {rho} is not below 1")));
            }
            return Ok(Lqr { k, p, residual, iterations: iter, spectral_radius: rho });
        }
    }
    Err(Error::Design(format!(
        "Riccati iteration did not settle within {MAX_ITERATIONS} steps"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(a: f64, b: f64) -> StateSpace {
        let m = |v| DMatrix::from_element(1, 1, v);
        StateSpace::new(m(a), m(b), m(1.0), m(0.0), 1.0).unwrap()
    }

    #[test]
    fn scalar_golden_ratio() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let l = lqr_design(&scalar(1.0, 1.0), &one, &one).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((l.p[(0, 0)] - phi).abs() < 1e-9);
        assert!((l.k[(0, 0)] - phi / (1.0 + phi)).abs() < 1e-9);
        assert!(l.residual < RICCATI_TOLERANCE);
    }

    #[test]
    fn deadbeat_needs_no_gain() {
        let q = DMatrix::identity(2, 2);
        let sys = StateSpace::new(
            DMatrix::zeros(2, 2),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
            0.1,
        )
        .unwrap();
        let l = lqr_design(&sys, &q, &DMatrix::from_element(1, 1, 3.0)).unwrap();
        assert!(l.k.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn double_integrator_is_stabilized() {
        let ts = 0.004;
        let sys = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]),
            DMatrix::from_column_slice(2, 1, &[0.5 * ts * ts, ts]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
            ts,
        )
        .unwrap();
        let l = lqr_design(&sys, &DMatrix::identity(2, 2), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        // independent eigenvalue check of A − BK
        let acl = &sys.a - &sys.b * &l.k;
        let eig = acl.complex_eigenvalues();
        assert!(eig.iter().all(|z| z.norm() < 1.0));
        assert!(l.residual < RICCATI_TOLERANCE);
    }

    #[test]
    fn slow_modes_settle() {
        // two poles at 1 and one at 0.999: plain iteration needs far more than the step budget
        let ts = 0.004;
        let sys = StateSpace::new(
            DMatrix::from_row_slice(3, 3, &[1.0, ts, 0.0, 0.0, 1.0, ts, 0.0, 0.0, 0.999]),
            DMatrix::from_column_slice(3, 1, &[0.0, 0.0, ts]),
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            DMatrix::zeros(1, 1),
            ts,
        )
        .unwrap();
        let l = lqr_design(&sys, &DMatrix::identity(3, 3), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!(l.residual < RICCATI_TOLERANCE);
        assert!(l.spectral_radius < 1.0);
    }

    #[test]
    fn unstabilizable_pair_fails() {
        let sys = scalar(2.0, 0.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(lqr_design(&sys, &one, &one), Err(Error::Design(_))));
    }

    proptest! {
        #[test]
        fn larger_r_never_raises_gain(a in 0.2f64..1.5, b in 0.1f64..2.0, r1 in 0.01f64..10.0, dr in 0.0f64..10.0) {
            let q = DMatrix::from_element(1, 1, 1.0);
            let k1 = lqr_design(&scalar(a, b), &q, &DMatrix::from_element(1, 1, r1)).unwrap().k[(0, 0)].abs();
            let k2 = lqr_design(&scalar(a, b), &q, &DMatrix::from_element(1, 1, r1 + dr)).unwrap().k[(0, 0)].abs();
            prop_assert!(k2 <= k1 + 1e-9);
        }
    }
}
