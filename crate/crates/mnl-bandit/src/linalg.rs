//! Small dense linear-algebra kernels, generic over the scalar type.
//!
//! Matrices here are tiny (K x K choice Jacobians, Kd x Kd Hessians with
//! Kd <= ~100), so straightforward Cholesky and cyclic-Jacobi routines are
//! both adequate and dependency-free.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::Scalar;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<T: Scalar>(a: &ArrayView2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "cholesky",
            expected: n,
            actual: a.ncols(),
        });
    }
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            if i == j {
                if s <= T::zero() || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves `L L^T u = b` given the lower factor `L`.
pub fn cholesky_solve<T: Scalar>(l: &Array2<T>, b: &ArrayView1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[(i, p)] * y[p];
        }
        y[i] = s / l[(i, i)];
    }
    let mut u = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for p in i + 1..n {
            s -= l[(p, i)] * u[p];
        }
        u[i] = s / l[(i, i)];
    }
    u
}

/// Solves `A u = b` for symmetric positive-definite `A`.
pub fn solve_spd<T: Scalar>(a: &ArrayView2<T>, b: &ArrayView1<T>) -> Result<Array1<T>> {
    let l = cholesky(a)?;
    Ok(cholesky_solve(&l, b))
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse<T: Scalar>(a: &ArrayView2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    let l = cholesky(a)?;
    let mut inv = Array2::zeros((n, n));
    let mut e = Array1::zeros(n);
    for j in 0..n {
        e[j] = T::one();
        let col = cholesky_solve(&l, &e.view());
        inv.column_mut(j).assign(&col);
        e[j] = T::zero();
    }
    // Symmetrize to wash out round-off drift between columns.
    for i in 0..n {
        for j in 0..i {
            let m = (inv[(i, j)] + inv[(j, i)]) / T::from_f64(2.0).unwrap();
            inv[(i, j)] = m;
            inv[(j, i)] = m;
        }
    }
    Ok(inv)
}

/// `log det A` for symmetric positive-definite `A`.
pub fn log_det_spd<T: Scalar>(a: &ArrayView2<T>) -> Result<T> {
    let l = cholesky(a)?;
    let two = T::from_f64(2.0).unwrap();
    Ok((0..a.nrows()).map(|i| l[(i, i)].ln()).sum::<T>() * two)
}

/// Quadratic form `x^T A x`.
pub fn quadratic_form<T: Scalar>(a: &ArrayView2<T>, x: &ArrayView1<T>) -> T {
    let n = a.nrows();
    let mut s = T::zero();
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            row += a[(i, j)] * x[j];
        }
        s += x[i] * row;
    }
    s
}

/// Eigenvalues of a symmetric matrix (ascending), by the cyclic Jacobi method.
pub fn sym_eigenvalues<T: Scalar>(a: &ArrayView2<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "sym_eigenvalues",
            expected: n,
            actual: a.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let mut m = a.to_owned();
    let eps = T::epsilon();
    let norm: T = m.iter().map(|v| *v * *v).sum::<T>().sqrt() + T::one();
    let tol = eps * eps * norm * norm;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= eps * norm {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::from_f64(2.0).unwrap() * apq);
                let t = if theta.abs() > T::from_f64(1e12).unwrap() {
                    (T::from_f64(2.0).unwrap() * theta).recip()
                } else {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for i in 0..n {
                    let mpi = m[(p, i)];
                    let mqi = m[(q, i)];
                    m[(p, i)] = c * mpi - s * mqi;
                    m[(q, i)] = s * mpi + c * mqi;
                }
            }
        }
    }
    let mut eigs: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).expect("non-finite eigenvalue"));
    Ok(Array1::from_vec(eigs))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Scalar>(a: &ArrayView2<T>) -> Result<T> {
    Ok(sym_eigenvalues(a)?[0])
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue<T: Scalar>(a: &ArrayView2<T>) -> Result<T> {
    let e = sym_eigenvalues(a)?;
    Ok(e[e.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solve_roundtrip() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = array![1.0, -2.0, 0.7];
        let u = solve_spd(&a.view(), &b.view()).unwrap();
        let back = a.dot(&u);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            cholesky(&a.view()),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn jacobi_matches_known_eigenvalues() {
        // [[a, b], [b, a]] has eigenvalues a - b and a + b.
        let a = array![[2.0 / 9.0, -1.0 / 9.0], [-1.0 / 9.0, 2.0 / 9.0]];
        let e = sym_eigenvalues(&a.view()).unwrap();
        assert_abs_diff_eq!(e[0], 1.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn spd_inverse_identity() {
        let a = array![[3.0, 0.5], [0.5, 1.5]];
        let inv = spd_inverse(&a.view()).unwrap();
        let prod = a.dot(&inv);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)], want, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn log_det_matches_direct() {
        let a = array![[2.0, 0.3], [0.3, 5.0]];
        let det: f64 = 2.0 * 5.0 - 0.3 * 0.3;
        assert_abs_diff_eq!(log_det_spd(&a.view()).unwrap(), det.ln(), epsilon = 1e-13);
    }

    #[test]
    fn generic_f32_kernels_work() {
        let a = array![[4.0f32, 1.0], [1.0, 3.0]];
        let e = sym_eigenvalues(&a.view()).unwrap();
        // Roots of x^2 - 7x + 11 are (7 +- sqrt(5)) / 2.
        assert!((e[0] - 2.381_966).abs() < 1e-5);
        assert!((e[1] - 4.618_034).abs() < 1e-5);
    }
}
