//! The multinomial-logit choice model and its derivative structure.
//!
//! A context/action `x` in `R^d` together with a stacked parameter vector
//! `theta = [theta_1; ...; theta_K]` in `R^{Kd}` induces a distribution over
//! `K + 1` outcomes: option `i` is chosen with probability proportional to
//! `exp(theta_i^T x)` and the outside option `0` carries weight `1`. All
//! probability computations route through shifted exponentials, so logits as
//! large as several hundred stay finite.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::gauss_legendre_unit;
use crate::Scalar;

/// Stacked parameter vector with `K` per-option blocks of length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<T> {
    entries: Array1<T>,
    k: usize,
    d: usize,
}

impl<T: Scalar> ParameterVector<T> {
    pub fn new(k: usize, d: usize, entries: Array1<T>) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "parameter vector needs k >= 1 and d >= 1, got k={k}, d={d}"
            )));
        }
        if entries.len() != k * d {
            return Err(Error::DimensionMismatch {
                what: "parameter vector entries",
                expected: k * d,
                actual: entries.len(),
            });
        }
        Ok(Self { entries, k, d })
    }

    pub fn zeros(k: usize, d: usize) -> Result<Self> {
        Self::new(k, d, Array1::zeros(k * d))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parameter block of option `i` (zero-based, `i < K`).
    pub fn block(&self, i: usize) -> ArrayView1<'_, T> {
        self.entries.slice(ndarray::s![i * self.d..(i + 1) * self.d])
    }

    pub fn as_array(&self) -> &Array1<T> {
        &self.entries
    }

    pub fn into_array(self) -> Array1<T> {
        self.entries
    }

    pub fn norm(&self) -> T {
        self.entries.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    /// Same direction, rescaled to the given Euclidean norm.
    pub fn scaled_to_norm(&self, target: T) -> Result<Self> {
        let n = self.norm();
        if n == T::zero() {
            return Err(Error::InvalidArgument(
                "cannot rescale the zero parameter vector".into(),
            ));
        }
        let factor = target / n;
        Ok(Self {
            entries: self.entries.mapv(|v| v * factor),
            k: self.k,
            d: self.d,
        })
    }

    /// Replaces the entries, keeping the block structure.
    pub fn with_entries(&self, entries: Array1<T>) -> Result<Self> {
        Self::new(self.k, self.d, entries)
    }
}

/// Choice distribution over the outside option and the `K` options.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceDistribution<T> {
    pub outside_prob: T,
    pub option_probs: Array1<T>,
}

impl<T: Scalar> ChoiceDistribution<T> {
    pub fn k(&self) -> usize {
        self.option_probs.len()
    }

    /// Probability of outcome `i`, with `0` the outside option.
    pub fn prob(&self, i: usize) -> T {
        if i == 0 {
            self.outside_prob
        } else {
            self.option_probs[i - 1]
        }
    }

    pub fn total(&self) -> T {
        self.outside_prob + self.option_probs.iter().copied().sum::<T>()
    }
}

/// The K x K derivative matrix `diag(z) - z z^T` of the choice probabilities
/// with respect to the logits: a symmetric, strictly diagonally dominant
/// M-matrix, hence positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix<T> {
    entries: Array2<T>,
}

impl<T: Scalar> JacobianMatrix<T> {
    /// Wraps a candidate matrix after checking the structural invariants.
    pub fn new(entries: Array2<T>) -> Result<Self> {
        let m = Self { entries };
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn from_probs(z: &ChoiceDistribution<T>) -> Self {
        let k = z.k();
        let mut a = Array2::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                let delta = if i == j { T::one() } else { T::zero() };
                a[(i, j)] = z.option_probs[i] * (delta - z.option_probs[j]);
            }
        }
        Self { entries: a }
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_array(&self) -> &Array2<T> {
        &self.entries
    }

    /// Structural invariants: symmetry, positive diagonal, nonpositive
    /// off-diagonal, strict diagonal dominance.
    pub fn validate(&self) -> Result<()> {
        let k = self.entries.nrows();
        if self.entries.ncols() != k || k == 0 {
            return Err(Error::DimensionMismatch {
                what: "jacobian matrix",
                expected: k.max(1),
                actual: self.entries.ncols(),
            });
        }
        let tol = T::epsilon() * T::from_f64(64.0).unwrap();
        for i in 0..k {
            if self.entries[(i, i)] <= T::zero() {
                return Err(Error::JacobianInvariant("positive diagonal"));
            }
            let mut off_sum = T::zero();
            for j in 0..k {
                if i == j {
                    continue;
                }
                if self.entries[(i, j)] > tol {
                    return Err(Error::JacobianInvariant("nonpositive off-diagonal"));
                }
                if (self.entries[(i, j)] - self.entries[(j, i)]).abs() > tol {
                    return Err(Error::JacobianInvariant("symmetry"));
                }
                off_sum += self.entries[(i, j)].abs();
            }
            if self.entries[(i, i)] <= off_sum {
                return Err(Error::JacobianInvariant("strict diagonal dominance"));
            }
        }
        Ok(())
    }

    /// Row sums, i.e. `A 1`.
    pub fn row_sums(&self) -> Array1<T> {
        let k = self.k();
        Array1::from_iter((0..k).map(|i| (0..k).map(|j| self.entries[(i, j)]).sum::<T>()))
    }
}

/// Derived problem constants for a bounded instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants<T> {
    /// Parameter-norm bound `S`.
    pub s: T,
    /// Revenue-norm bound `R`.
    pub r: T,
    /// Largest action norm `X`.
    pub x: T,
    pub kappa_lower: T,
    pub kappa_upper: T,
    pub l_upper: T,
}

impl<T: Scalar> ProblemConstants<T> {
    pub fn from_bounds(s: T, r: T, x: T, k: usize) -> Self {
        let (kappa_lower, kappa_upper) = kappa_bounds(s, x, k);
        Self {
            s,
            r,
            x,
            kappa_lower,
            kappa_upper,
            l_upper: l_upper_bound(s, x, k),
        }
    }
}

/// Log-sum-exp with an implicit unit term: `log(1 + sum_i exp(s_i))`.
///
/// The exponentials are shifted by `max(0, max_i s_i)` so the computation
/// never overflows for finite inputs.
pub fn lse<T: Scalar>(s: ArrayView1<T>) -> Result<T> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(
            "lse needs at least one logit (K >= 1)".into(),
        ));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lse input"));
    }
    let mut m = T::zero();
    for v in s.iter() {
        if *v > m {
            m = *v;
        }
    }
    let sum = (-m).exp() + s.iter().map(|v| (*v - m).exp()).sum::<T>();
    Ok(m + sum.ln())
}

/// Per-option logits `theta_i^T x`.
pub fn logits<T: Scalar>(x: ArrayView1<T>, theta: &ParameterVector<T>) -> Result<Array1<T>> {
    if x.len() != theta.d() {
        return Err(Error::DimensionMismatch {
            what: "action vector",
            expected: theta.d(),
            actual: x.len(),
        });
    }
    Ok(Array1::from_iter(
        (0..theta.k()).map(|i| theta.block(i).dot(&x)),
    ))
}

pub(crate) fn probs_from_logits<T: Scalar>(s: &Array1<T>) -> ChoiceDistribution<T> {
    let mut m = T::zero();
    for v in s.iter() {
        if *v > m {
            m = *v;
        }
    }
    let e0 = (-m).exp();
    let e = s.mapv(|v| (v - m).exp());
    let den = e0 + e.iter().copied().sum::<T>();
    ChoiceDistribution {
        outside_prob: e0 / den,
        option_probs: e.mapv(|v| v / den),
    }
}

/// Choice probabilities `z(x, theta)` of the outside option and each option.
pub fn choice_probabilities<T: Scalar>(
    x: ArrayView1<T>,
    theta: &ParameterVector<T>,
) -> Result<ChoiceDistribution<T>> {
    let s = logits(x, theta)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("choice logits"));
    }
    Ok(probs_from_logits(&s))
}

/// The derivative matrix `A(x, theta) = diag(z) - z z^T`.
pub fn jacobian<T: Scalar>(
    x: ArrayView1<T>,
    theta: &ParameterVector<T>,
) -> Result<JacobianMatrix<T>> {
    let z = choice_probabilities(x, theta)?;
    Ok(JacobianMatrix::from_probs(&z))
}

/// Path-averaged derivative matrix `B(x, theta1, theta2)`: the integral of
/// `A(x, .)` along the segment from `theta2` to `theta1`, by Gauss-Legendre
/// quadrature with the given node count (>= 2).
pub fn mean_value_jacobian<T: Scalar>(
    x: ArrayView1<T>,
    theta1: &ParameterVector<T>,
    theta2: &ParameterVector<T>,
    nodes: usize,
) -> Result<JacobianMatrix<T>> {
    if theta1.k() != theta2.k() || theta1.d() != theta2.d() {
        return Err(Error::DimensionMismatch {
            what: "mean-value parameter pair",
            expected: theta1.len(),
            actual: theta2.len(),
        });
    }
    let (vs, ws) = gauss_legendre_unit::<T>(nodes)?;
    let k = theta1.k();
    let mut acc = Array2::zeros((k, k));
    let s1 = logits(x, theta1)?;
    let s2 = logits(x, theta2)?;
    for (v, w) in vs.iter().zip(ws.iter()) {
        // Logits are affine in theta, so blend them directly.
        let s = Array1::from_iter(
            s1.iter()
                .zip(s2.iter())
                .map(|(a, b)| *v * *a + (T::one() - *v) * *b),
        );
        let z = probs_from_logits(&s);
        let a = JacobianMatrix::from_probs(&z);
        for i in 0..k {
            for j in 0..k {
                acc[(i, j)] += *w * a.entries[(i, j)];
            }
        }
    }
    Ok(JacobianMatrix { entries: acc })
}

/// Expected revenue `rho^T z(x, theta)`; the outside option earns zero.
pub fn expected_reward<T: Scalar>(
    x: ArrayView1<T>,
    theta: &ParameterVector<T>,
    rho: ArrayView1<T>,
) -> Result<T> {
    if rho.len() != theta.k() {
        return Err(Error::DimensionMismatch {
            what: "revenue vector",
            expected: theta.k(),
            actual: rho.len(),
        });
    }
    if rho.iter().any(|v| *v < T::zero()) {
        return Err(Error::InvalidArgument(
            "revenue entries must be nonnegative".into(),
        ));
    }
    let z = choice_probabilities(x, theta)?;
    Ok(rho.dot(&z.option_probs))
}

/// Samples an outcome in `{0, ..., K}` by inverse CDF on one uniform draw;
/// the cumulative order is `0, 1, ..., K`.
pub fn sample_outcome<T: Scalar, R: Rng + ?Sized>(
    x: ArrayView1<T>,
    theta_star: &ParameterVector<T>,
    rng: &mut R,
) -> Result<usize> {
    let z = choice_probabilities(x, theta_star)?;
    let u = T::from_f64(rng.random::<f64>()).unwrap();
    let mut cum = z.outside_prob;
    if u < cum {
        return Ok(0);
    }
    for i in 0..z.k() {
        cum += z.option_probs[i];
        if u < cum {
            return Ok(i + 1);
        }
    }
    Ok(z.k())
}

/// Closed-form lower and upper bounds on the flatness constant `kappa`
/// (the reciprocal of the smallest Jacobian eigenvalue over the feasible
/// set) in terms of `S`, `X` and `K`.
pub fn kappa_bounds<T: Scalar>(s: T, x: T, k: usize) -> (T, T) {
    let kf = T::from_usize(k).unwrap();
    let a = s * x;
    let a_scaled = a / kf.sqrt();
    let lower = a_scaled.exp() * {
        let b = T::one() + kf * (-a_scaled).exp();
        b * b
    };
    let upper = a.exp() * {
        let b = T::one() + kf * a.exp();
        b * b
    };
    (lower, upper)
}

/// Closed-form upper bound on the smoothness constant `L` (the largest
/// Jacobian eigenvalue over the feasible set), evaluated at `||x|| = X`.
pub fn l_upper_bound<T: Scalar>(s: T, x: T, k: usize) -> T {
    let a = s * x;
    let km1 = T::from_usize(k - 1).unwrap();
    a.exp() / (T::one() + a.exp() + km1 * (-a).exp())
}

/// `(min row sum, lambda_min, max row sum)` of a valid Jacobian matrix.
///
/// For a strictly diagonally dominant symmetric M-matrix the smallest
/// eigenvalue is sandwiched between the extreme row sums.
pub fn eigen_sandwich<T: Scalar>(a: &JacobianMatrix<T>) -> Result<(T, T, T)> {
    a.validate()?;
    let sums = a.row_sums();
    let mut lo = sums[0];
    let mut hi = sums[0];
    for v in sums.iter() {
        if *v < lo {
            lo = *v;
        }
        if *v > hi {
            hi = *v;
        }
    }
    let lambda_min = linalg::min_eigenvalue(&a.as_array().view())?;
    Ok((lo, lambda_min, hi))
}

/// Monte-Carlo extremes of the Jacobian spectrum over the feasible set
/// `{||x|| <= X, ||theta|| <= S}`.
///
/// Samples norms on the boundary spheres (where the extremes live) and also
/// probes the known extremal configurations: all blocks aligned at norm
/// `S/sqrt(K)` against `x`, and a single block at full norm `S` along `x`.
/// Returns `(min lambda_min, max lambda_max)` over the sample.
pub fn empirical_spectrum_extremes<T: Scalar, R: Rng + ?Sized>(
    s: T,
    x_bound: T,
    k: usize,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<(T, T)> {
    let mut min_eig = T::infinity();
    let mut max_eig = T::neg_infinity();
    let mut consider = |theta: &ParameterVector<T>, x: &Array1<T>| -> Result<()> {
        let a = jacobian(x.view(), theta)?;
        let eigs = linalg::sym_eigenvalues(&a.as_array().view())?;
        if eigs[0] < min_eig {
            min_eig = eigs[0];
        }
        if eigs[eigs.len() - 1] > max_eig {
            max_eig = eigs[eigs.len() - 1];
        }
        Ok(())
    };

    // Extremal probes.
    let mut dir = Array1::zeros(d);
    dir[0] = T::one();
    let x_vec = dir.mapv(|v| v * x_bound);
    let kf = T::from_usize(k).unwrap();
    let mut aligned = Array1::zeros(k * d);
    for i in 0..k {
        aligned[i * d] = -s / kf.sqrt();
    }
    consider(&ParameterVector::new(k, d, aligned)?, &x_vec)?;
    let mut single = Array1::zeros(k * d);
    single[0] = s;
    consider(&ParameterVector::new(k, d, single)?, &x_vec)?;

    for _ in 0..samples {
        let theta = random_direction::<T, R>(k * d, rng).mapv(|v| v * s);
        let x = random_direction::<T, R>(d, rng).mapv(|v| v * x_bound);
        consider(&ParameterVector::new(k, d, theta)?, &x)?;
    }
    Ok((min_eig, max_eig))
}

fn random_direction<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array1<T> {
    loop {
        let v: Array1<T> = Array1::from_iter(
            (0..n).map(|_| T::from_f64(rng.sample::<f64, _>(rand_distr::StandardNormal)).unwrap()),
        );
        let norm = v.iter().map(|u| *u * *u).sum::<T>().sqrt();
        if norm > T::from_f64(1e-12).unwrap() {
            return v.mapv(|u| u / norm);
        }
    }
}
