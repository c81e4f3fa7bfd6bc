//! Gauss-Legendre quadrature on the unit interval.

use crate::error::{Error, Result};
use crate::Scalar;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[0, 1]`.
///
/// Nodes are computed in `f64` by Newton iteration on the Legendre
/// recurrence and then cast to the target scalar.
pub fn gauss_legendre_unit<T: Scalar>(n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "quadrature needs at least 2 nodes, got {n}"
        )));
    }
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let nf = n as f64;
    for i in 0..n {
        // Chebyshev-based initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1].
        nodes.push(T::from_f64(0.5 * (1.0 + x)).unwrap());
        weights.push(T::from_f64(0.5 * w).unwrap());
    }
    nodes.reverse();
    weights.reverse();
    Ok((nodes, weights))
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_one() {
        for n in [2, 5, 16, 32, 64] {
            let (_, w) = gauss_legendre_unit::<f64>(n).unwrap();
            let s: f64 = w.iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn integrates_polynomials_exactly() {
        // n-point rule is exact through degree 2n-1; check x^7 with n = 4.
        let (x, w) = gauss_legendre_unit::<f64>(4).unwrap();
        let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(7)).sum();
        assert_abs_diff_eq!(got, 1.0 / 8.0, epsilon = 1e-14);
    }

    #[test]
    fn integrates_smooth_integrand() {
        let (x, w) = gauss_legendre_unit::<f64>(32).unwrap();
        let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.exp()).sum();
        assert_abs_diff_eq!(got, std::f64::consts::E - 1.0, epsilon = 1e-13);
    }

    #[test]
    fn rejects_single_node() {
        assert!(gauss_legendre_unit::<f64>(1).is_err());
    }
}
