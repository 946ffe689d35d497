//! Dense linear-algebra helpers on top of `nalgebra`.
//!
//! Least squares goes through a Householder QR with column pivoting so that
//! rank deficiency can be reported against the original columns; the normal
//! equations are never formed.

use nalgebra::{DMatrix, DVector};

/// Rank-deficient least-squares problem. `deficient` holds original column
/// indices that the pivoted factorization pushed past the numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankDeficiency {
    pub rank: usize,
    pub deficient: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub theta: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(ΦᵀΦ)⁻¹`, assembled from the triangular factor.
    pub gram_inverse: DMatrix<f64>,
}

/// Minimizes `‖y − Φθ‖₂` by pivoted QR.
///
/// Rank tolerance is `ε · max(m, n) · σ_max(Φ)`.
pub fn lstsq(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares, RankDeficiency> {
    let (m, n) = phi.shape();
    assert_eq!(m, y.len(), "regressor rows must match observations");
    if n == 0 {
        return Ok(LeastSquares {
            theta: DVector::zeros(0),
            residuals: y.clone(),
            gram_inverse: DMatrix::zeros(0, 0),
        });
    }
    if m < n {
        return Err(RankDeficiency {
            rank: m,
            deficient: (m..n).collect(),
        });
    }

    let mut a = phi.clone();
    let mut b = y.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut v = vec![0.0; m];

    for k in 0..n {
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let norm = a.view((k, j), (m - k, 1)).norm_squared();
            if norm > best_norm {
                best_norm = norm;
                best = j;
            }
        }
        if best != k {
            a.swap_columns(k, best);
            perm.swap(k, best);
        }

        let x_norm = best_norm.sqrt();
        if x_norm == 0.0 {
            continue;
        }
        let x0 = a[(k, k)];
        let alpha = if x0 >= 0.0 { -x_norm } else { x_norm };
        for i in k..m {
            v[i] = a[(i, k)];
        }
        v[k] -= alpha;
        let v_norm2: f64 = v[k..m].iter().map(|t| t * t).sum();
        if v_norm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let mut col = a.column_mut(j);
            let s: f64 = (k..m).map(|i| v[i] * col[i]).sum::<f64>() * 2.0 / v_norm2;
            for i in k..m {
                col[i] -= s * v[i];
            }
        }
        let s: f64 = (k..m).map(|i| v[i] * b[i]).sum::<f64>() * 2.0 / v_norm2;
        for i in k..m {
            b[i] -= s * v[i];
        }
    }

    let r = a.view((0, 0), (n, n)).upper_triangle();
    let sigma = r.clone().singular_values();
    let sigma_max = sigma.max();
    let tol = f64::EPSILON * m.max(n) as f64 * sigma_max;
    let rank = sigma.iter().filter(|&&s| s > tol).count();
    if rank < n || sigma_max == 0.0 {
        return Err(RankDeficiency {
            rank,
            deficient: perm[rank..].to_vec(),
        });
    }

    let qtb = b.rows(0, n).into_owned();
    let theta_p = back_substitute(&r, &qtb);
    let mut theta = DVector::zeros(n);
    for (i, &p) in perm.iter().enumerate() {
        theta[p] = theta_p[i];
    }
    let residuals = y - phi * &theta;

    let mut r_inv = DMatrix::identity(n, n);
    for j in 0..n {
        let col = back_substitute(&r, &r_inv.column(j).into_owned());
        r_inv.set_column(j, &col);
    }
    let g_p = &r_inv * r_inv.transpose();
    let mut gram_inverse = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram_inverse[(perm[i], perm[j])] = g_p[(i, j)];
        }
    }

    Ok(LeastSquares {
        theta,
        residuals,
        gram_inverse,
    })
}

fn back_substitute(r: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Solves a square system, refusing numerically singular matrices
/// (reciprocal condition below `ε · n`).
pub fn solve_square(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() || n == 0 {
        return None;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin / smax < f64::EPSILON * n as f64 {
        return None;
    }
    a.clone().lu().solve(b)
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Max-row-sum norm.
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
