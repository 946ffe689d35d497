use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimation::PolyModel;

/// `x(k+1) = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub sample_time: f64,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>, sample_time: f64) -> Result<Self> {
        let n = a.nrows();
        let ok = a.ncols() == n
            && b.nrows() == n
            && c.ncols() == n
            && d.nrows() == c.nrows()
            && d.ncols() == b.ncols();
        if !ok {
            return Err(Error::Model(format!(
                "inconsistent dimensions A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        if !(sample_time > 0.0) {
            return Err(Error::Model("sample time must be positive".into()));
        }
        Ok(StateSpace { a, b, c, d, sample_time })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `C (zI − A)⁻¹ B + D` for a single-input single-output system.
    pub fn frequency_response(&self, omega: f64) -> Result<Complex64> {
        let n = self.order();
        let z = Complex64::from_polar(1.0, omega * self.sample_time);
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let b = DVector::from_fn(n, |i, _| Complex64::new(self.b[(i, 0)], 0.0));
        let x = m
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Domain(format!("z = e^(j{omega}Ts) is a pole")))?;
        let y: Complex64 = (0..n).map(|i| x[i] * self.c[(0, i)]).sum();
        Ok(y + self.d[(0, 0)])
    }
}

/// Controllable canonical realization of `B(z)/A(z)`; ARMAX noise
/// polynomials are ignored. Order is `max(na, nk + nb − 1)`.
pub fn poly_to_statespace(m: &PolyModel) -> Result<StateSpace> {
    m.validate()?;
    let alpha = m.a_poly();
    let beta = m.b_poly();
    let n = (alpha.len() - 1).max(beta.len() - 1);
    let al = |j: usize| alpha.get(j).copied().unwrap_or(0.0);
    let be = |j: usize| beta.get(j).copied().unwrap_or(0.0);
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -al(j + 1)
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut b = DMatrix::zeros(n, 1);
    if n > 0 {
        b[(0, 0)] = 1.0;
    }
    let b0 = be(0);
    let c = DMatrix::from_fn(1, n, |_, j| be(j + 1) - b0 * al(j + 1));
    let d = DMatrix::from_element(1, 1, b0);
    StateSpace::new(a, b, c, d, m.sample_time)
}

/// Appends an angle state integrating the output: `θ(k+1) = θ(k) + Ts·y(k)`.
/// Requires a strictly proper system.
pub fn augment_with_angle(sys: &StateSpace) -> Result<StateSpace> {
    if sys.d.iter().any(|&v| v != 0.0) {
        return Err(Error::Model("angle augmentation needs D = 0 (nk >= 1)".into()));
    }
    let n = sys.order();
    let ts = sys.sample_time;
    let a = DMatrix::from_fn(n + 1, n + 1, |i, j| {
        if i < n && j < n {
            sys.a[(i, j)]
        } else if i == n && j < n {
            ts * sys.c[(0, j)]
        } else if i == n && j == n {
            1.0
        } else {
            0.0
        }
    });
    let b = DMatrix::from_fn(n + 1, 1, |i, _| if i < n { sys.b[(i, 0)] } else { 0.0 });
    let c = DMatrix::from_fn(1, n + 1, |_, j| if j == n { 1.0 } else { 0.0 });
    StateSpace::new(a, b, c, DMatrix::zeros(1, 1), ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::frequency_response;
    use crate::linalg::spectral_radius;

    fn check_round_trip(m: &PolyModel) {
        let ss = poly_to_statespace(m).unwrap();
        let nyq = std::f64::consts::PI / m.sample_time;
        let ws: Vec<f64> = (0..200).map(|i| 0.999 * nyq * (i as f64 + 0.5) / 200.0).collect();
        let direct = frequency_response(m, &ws).unwrap();
        for (w, g) in ws.iter().zip(direct) {
            let h = ss.frequency_response(*w).unwrap();
            assert!((h - g).norm() <= 1e-10 * g.norm().max(1e-300), "omega {w}: {h} vs {g}");
        }
    }

    #[test]
    fn first_order() {
        let m = PolyModel::from_polynomials(&[1.0, -0.5], &[0.0, 1.0], 0.01).unwrap();
        let ss = poly_to_statespace(&m).unwrap();
        assert_eq!(ss.order(), 1);
        assert_eq!(ss.a[(0, 0)], 0.5);
        check_round_trip(&m);
    }

    #[test]
    fn pure_delay_is_shift_chain() {
        let m = PolyModel::from_polynomials(&[1.0], &[0.0, 0.0, 1.0], 0.01).unwrap();
        let ss = poly_to_statespace(&m).unwrap();
        assert_eq!(ss.order(), 2);
        assert_eq!(spectral_radius(&ss.a), 0.0);
        check_round_trip(&m);
    }

    #[test]
    fn biproper_model() {
        let m = PolyModel::from_polynomials(&[1.0, -0.3, 0.1], &[0.7, 0.2, -0.4], 0.01).unwrap();
        check_round_trip(&m);
    }

    #[test]
    fn angle_augmentation_integrates_output() {
        let m = PolyModel::from_polynomials(&[1.0, -0.5], &[0.0, 1.0], 0.1).unwrap();
        let aug = augment_with_angle(&poly_to_statespace(&m).unwrap()).unwrap();
        // unit step: rate y = [0, 1, 1.5, ..], angle sums 0.1·y
        let mut x = DVector::zeros(2);
        for _ in 0..3 {
            x = &aug.a * &x + &aug.b * 1.0;
        }
        assert!((x[1] - 0.1 * (0.0 + 1.0 + 1.5)).abs() < 1e-12);
    }
}
