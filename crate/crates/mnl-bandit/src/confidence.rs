//! Confidence-set radii, Gram-matrix maintenance and exploration bonuses.
//!
//! Three nested notions of "plausible parameter" are supported:
//! the g-map confidence set (the one the agent's bonus is derived from),
//! the enlarged parameter-distance set used for diagnostics, and the
//! classical ellipsoid that ignores local curvature and pays an extra
//! `kappa` factor in its radius.

use std::io::Write;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::estimation::{g_map, hessian, InteractionHistory};
use crate::linalg;
use crate::model::ParameterVector;
use crate::Scalar;

/// Direct-solve refresh cadence for the incrementally maintained inverse.
const REFRESH_EVERY: usize = 100;

/// Gram matrix of played actions `V = kappa*lambda*I + sum x_s x_s^T`,
/// with its inverse maintained by Sherman-Morrison rank-one updates.
#[derive(Debug, Clone)]
pub struct GramState<T> {
    v: Array2<T>,
    v_inv: Array2<T>,
    t: usize,
    kappa: T,
    lambda: T,
    updates_since_refresh: usize,
}

impl<T: Scalar> GramState<T> {
    pub fn new(d: usize, kappa: T, lambda: T) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        if !(kappa > T::zero()) || !(lambda > T::zero()) {
            return Err(Error::InvalidArgument(
                "kappa and lambda must be positive".into(),
            ));
        }
        let scale = kappa * lambda;
        let mut v = Array2::zeros((d, d));
        let mut v_inv = Array2::zeros((d, d));
        for i in 0..d {
            v[(i, i)] = scale;
            v_inv[(i, i)] = scale.recip();
        }
        Ok(Self {
            v,
            v_inv,
            t: 1,
            kappa,
            lambda,
            updates_since_refresh: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.v.nrows()
    }

    /// Round counter: history length + 1.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn v(&self) -> &Array2<T> {
        &self.v
    }

    pub fn v_inv(&self) -> &Array2<T> {
        &self.v_inv
    }

    /// Rank-one update `V += x x^T` with a Sherman-Morrison inverse update;
    /// every [`REFRESH_EVERY`] updates the inverse is recomputed by a direct
    /// solve to cap numerical drift.
    pub fn update(&mut self, x: ArrayView1<T>) -> Result<()> {
        let d = self.d();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                what: "gram update vector",
                expected: d,
                actual: x.len(),
            });
        }
        for i in 0..d {
            for j in 0..d {
                self.v[(i, j)] += x[i] * x[j];
            }
        }
        let u = self.v_inv.dot(&x);
        let denom = T::one() + x.dot(&u);
        for i in 0..d {
            for j in 0..d {
                self.v_inv[(i, j)] -= u[i] * u[j] / denom;
            }
        }
        self.t += 1;
        self.updates_since_refresh += 1;
        if self.updates_since_refresh >= REFRESH_EVERY {
            self.v_inv = linalg::spd_inverse(&self.v.view())?;
            self.updates_since_refresh = 0;
        }
        Ok(())
    }

    /// Weighted norm `||x||_{V^{-1}}`, clamped at zero if round-off drives
    /// the quadratic form negative.
    pub fn inv_norm(&self, x: ArrayView1<T>) -> Result<T> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                what: "gram norm vector",
                expected: self.d(),
                actual: x.len(),
            });
        }
        let q = linalg::quadratic_form(&self.v_inv.view(), &x);
        debug_assert!(q > -T::from_f64(1e-12).unwrap(), "V^-1 form went negative");
        Ok(q.max(T::zero()).sqrt())
    }

    /// `log det V` (used by the elliptical-potential audit).
    pub fn log_det(&self) -> Result<T> {
        linalg::log_det_spd(&self.v.view())
    }

    /// `log det` of the fresh matrix `kappa*lambda*I`.
    pub fn log_det_initial(&self) -> T {
        T::from_usize(self.d()).unwrap() * (self.kappa * self.lambda).ln()
    }
}

/// Inputs of the confidence radii and exploration bonuses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusParams<T> {
    /// Revenue-norm bound `R`.
    pub r: T,
    /// Smoothness bound `L`.
    pub l: T,
    /// Flatness bound `kappa` (the closed-form upper bound in practice).
    pub kappa: T,
    /// Parameter-norm bound `S`.
    pub s: T,
    /// Confidence level `delta` in (0, 1).
    pub delta: T,
    /// Ridge weight `lambda`.
    pub lambda: T,
    pub d: usize,
    pub k: usize,
}

impl<T: Scalar> BonusParams<T> {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.r >= T::zero()) {
            problems.push("r must be nonnegative");
        }
        if !(self.l > T::zero()) {
            problems.push("l must be positive");
        }
        if !(self.kappa >= T::one()) {
            problems.push("kappa must be >= 1");
        }
        if !(self.s > T::zero()) {
            problems.push("s must be positive");
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            problems.push("delta must lie in (0, 1)");
        }
        if !(self.lambda > T::zero()) {
            problems.push("lambda must be positive");
        }
        if self.d == 0 || self.k == 0 {
            problems.push("d and k must be >= 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

/// Confidence radius for the g-map set at round `t`:
/// `K^{3/2} d / sqrt(lambda) * log(1 + t/(d lambda)) + sqrt(lambda/K)/2
///  + 2 K^{3/2} d / sqrt(lambda) * log(2/delta) + sqrt(lambda) S`.
pub fn beta_radius<T: Scalar>(t: usize, p: &BonusParams<T>) -> T {
    let k = T::from_usize(p.k).unwrap();
    let d = T::from_usize(p.d).unwrap();
    let tf = T::from_usize(t).unwrap();
    let two = T::from_f64(2.0).unwrap();
    let k32d = k * k.sqrt() * d;
    k32d / p.lambda.sqrt() * (T::one() + tf / (d * p.lambda)).ln()
        + (p.lambda / k).sqrt() / two
        + two * k32d / p.lambda.sqrt() * (two / p.delta).ln()
        + p.lambda.sqrt() * p.s
}

/// Radius of the classical ellipsoid set at round `t`:
/// `2 (sqrt(lambda) S + 2 sqrt(log(1/delta) + K d log(1 + t/(kappa lambda d))))`.
pub fn gamma_radius<T: Scalar>(t: usize, p: &BonusParams<T>) -> T {
    let k = T::from_usize(p.k).unwrap();
    let d = T::from_usize(p.d).unwrap();
    let tf = T::from_usize(t).unwrap();
    let two = T::from_f64(2.0).unwrap();
    let inner = (T::one() / p.delta).ln() + k * d * (T::one() + tf / (p.kappa * p.lambda * d)).ln();
    two * (p.lambda.sqrt() * p.s + two * inner.sqrt())
}

/// Curvature-aware exploration bonus
/// `2 R L beta_t sqrt(kappa (1 + 2S)) ||x||_{V^{-1}}`.
pub fn bonus_tight<T: Scalar>(
    x: ArrayView1<T>,
    beta_t: T,
    p: &BonusParams<T>,
    state: &GramState<T>,
) -> Result<T> {
    let two = T::from_f64(2.0).unwrap();
    let scale = two * p.r * p.l * beta_t * (p.kappa * (T::one() + two * p.s)).sqrt();
    Ok(scale * state.inv_norm(x)?)
}

/// Curvature-blind exploration bonus `2 R L kappa gamma_t ||x||_{V^{-1}}`.
pub fn bonus_loose<T: Scalar>(
    x: ArrayView1<T>,
    gamma_t: T,
    p: &BonusParams<T>,
    state: &GramState<T>,
) -> Result<T> {
    let two = T::from_f64(2.0).unwrap();
    let scale = two * p.r * p.l * p.kappa * gamma_t;
    Ok(scale * state.inv_norm(x)?)
}

fn inv_hessian_distance<T: Scalar>(
    diff: &ndarray::Array1<T>,
    history: &InteractionHistory<T>,
    theta: &ParameterVector<T>,
    lambda: T,
) -> Result<T> {
    let h = hessian(history, theta, lambda)?;
    let u = linalg::solve_spd(&h.view(), &diff.view())?;
    Ok(diff.dot(&u).max(T::zero()).sqrt())
}

/// Membership in the g-map confidence set:
/// `||theta|| <= S` and `||g(theta) - g(estimate)||_{H(theta)^{-1}} <= beta_t`.
pub fn in_confidence_set<T: Scalar>(
    theta: &ParameterVector<T>,
    estimate: &ParameterVector<T>,
    history: &InteractionHistory<T>,
    lambda: T,
    s_bound: T,
    beta_t: T,
) -> Result<bool> {
    if theta.norm() > s_bound {
        return Ok(false);
    }
    let diff = g_map(history, theta, lambda)? - g_map(history, estimate, lambda)?;
    Ok(inv_hessian_distance(&diff, history, theta, lambda)? <= beta_t)
}

/// Membership in the enlarged parameter-distance set:
/// `||theta|| <= S` and `||theta - estimate||_{H(theta)^{-1}} <= (2 + 4S) beta_t`.
pub fn in_enlarged_confidence_set<T: Scalar>(
    theta: &ParameterVector<T>,
    estimate: &ParameterVector<T>,
    history: &InteractionHistory<T>,
    lambda: T,
    s_bound: T,
    beta_t: T,
) -> Result<bool> {
    if theta.norm() > s_bound {
        return Ok(false);
    }
    let two = T::from_f64(2.0).unwrap();
    let four = T::from_f64(4.0).unwrap();
    let radius = (two + four * s_bound) * beta_t;
    let diff = theta.as_array() - estimate.as_array();
    Ok(inv_hessian_distance(&diff, history, theta, lambda)? <= radius)
}

/// Membership in the classical ellipsoid:
/// `||theta|| <= S` and the block-diagonal weighted norm
/// `sqrt(sum_i ||theta_i - tilde_i||^2_{V^{-1}}) <= kappa * gamma_t`.
///
/// The Kronecker structure `I_K (x) V` is never materialized; blocks are
/// weighted independently.
pub fn in_ellipsoid_confidence_set<T: Scalar>(
    theta: &ParameterVector<T>,
    tilde_estimate: &ParameterVector<T>,
    state: &GramState<T>,
    s_bound: T,
    kappa: T,
    gamma_t: T,
) -> Result<bool> {
    if theta.norm() > s_bound {
        return Ok(false);
    }
    if theta.k() != tilde_estimate.k() || theta.d() != tilde_estimate.d() {
        return Err(Error::DimensionMismatch {
            what: "ellipsoid membership parameters",
            expected: theta.len(),
            actual: tilde_estimate.len(),
        });
    }
    let mut total = T::zero();
    for i in 0..theta.k() {
        let diff = &theta.block(i) - &tilde_estimate.block(i);
        let q = linalg::quadratic_form(&state.v_inv().view(), &diff.view());
        total += q.max(T::zero());
    }
    Ok(total.sqrt() <= kappa * gamma_t)
}

/// Block-diagonal weighted distances between two stacked parameters under
/// the action Gram matrix: `(||.||_{I_K (x) V^{-1}}, ||.||_{I_K (x) V})`.
///
/// The ellipsoid membership uses the inverse-weighted form; the direct form
/// is exposed for diagnostics because the two appear interchangeably in
/// derivations of this set and differ materially once `V` grows.
pub fn ellipsoid_distances<T: Scalar>(
    theta: &ParameterVector<T>,
    other: &ParameterVector<T>,
    state: &GramState<T>,
) -> Result<(T, T)> {
    if theta.k() != other.k() || theta.d() != other.d() {
        return Err(Error::DimensionMismatch {
            what: "ellipsoid distance parameters",
            expected: theta.len(),
            actual: other.len(),
        });
    }
    let mut inv_total = T::zero();
    let mut direct_total = T::zero();
    for i in 0..theta.k() {
        let diff = &theta.block(i) - &other.block(i);
        inv_total += linalg::quadratic_form(&state.v_inv().view(), &diff.view()).max(T::zero());
        direct_total += linalg::quadratic_form(&state.v().view(), &diff.view()).max(T::zero());
    }
    Ok((inv_total.sqrt(), direct_total.sqrt()))
}

/// Evaluates all three memberships over a grid of parameter points and
/// writes `(theta components..., in_c, in_c_tilde, in_e)` CSV rows for
/// external plotting.
#[allow(clippy::too_many_arguments)]
pub fn write_membership_grid<T: Scalar, W: Write>(
    out: &mut W,
    grid: &[ParameterVector<T>],
    estimate: &ParameterVector<T>,
    tilde_estimate: &ParameterVector<T>,
    history: &InteractionHistory<T>,
    state: &GramState<T>,
    lambda: T,
    s_bound: T,
    beta_t: T,
    gamma_t: T,
) -> Result<()> {
    let kd = estimate.len();
    let names: Vec<String> = (1..=kd).map(|i| format!("theta_{i}")).collect();
    writeln!(out, "{},in_c,in_c_tilde,in_e", names.join(","))?;
    for point in grid {
        let c = in_confidence_set(point, estimate, history, lambda, s_bound, beta_t)?;
        let ct = in_enlarged_confidence_set(point, estimate, history, lambda, s_bound, beta_t)?;
        let e = in_ellipsoid_confidence_set(
            point,
            tilde_estimate,
            state,
            s_bound,
            state.kappa(),
            gamma_t,
        )?;
        let coords: Vec<String> = point.as_array().iter().map(|v| format!("{v}")).collect();
        writeln!(
            out,
            "{},{},{},{}",
            coords.join(","),
            u8::from(c),
            u8::from(ct),
            u8::from(e)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn params(k: usize, d: usize, lambda: f64, delta: f64, s: f64, kappa: f64) -> BonusParams<f64> {
        BonusParams {
            r: 1.0,
            l: 0.5,
            kappa,
            s,
            delta,
            lambda,
            d,
            k,
        }
    }

    #[test]
    fn beta_radius_closed_forms() {
        // Hypothetical delta = 2 kills the log(2/delta) term.
        let p = params(1, 1, 1.0, 2.0, 1.0, 1.0);
        assert_abs_diff_eq!(beta_radius(0, &p), 1.5, epsilon = 1e-14);
        let p = params(1, 1, 1.0, 0.5, 1.0, 1.0);
        assert_abs_diff_eq!(
            beta_radius(1, &p),
            4.965_735_902_799_727,
            epsilon = 1e-13
        );
    }

    #[test]
    fn gamma_radius_closed_forms() {
        // Hypothetical delta = 1 kills the log(1/delta) term; t = 0 kills the other.
        let p = params(2, 3, 4.0, 1.0, 0.7, 2.0);
        assert_abs_diff_eq!(gamma_radius(0, &p), 2.0 * 2.0 * 0.7, epsilon = 1e-14);
        let p = params(1, 1, 1.0, 0.5, 1.0, 1.0);
        assert_abs_diff_eq!(
            gamma_radius(1, &p),
            6.709_640_090_061_899,
            epsilon = 1e-13
        );
    }

    #[test]
    #[allow(clippy::type_complexity)]
    fn radii_regression_table() {
        // Frozen against an independent arbitrary-precision oracle.
        let cases: [(usize, usize, usize, f64, f64, f64, f64, f64, f64); 20] = [
            (0, 1, 1, 1.0, 0.1, 1.0, 1.0, 7.491_464_547_107_982, 8.069_708_517_540_585),
            (1, 1, 1, 1.0, 0.5, 1.0, 1.0, 4.965_735_902_799_727, 6.709_640_090_061_899),
            (1, 1, 1, 1.0, 0.1, 0.5, 2.0, 7.684_611_727_667_927, 7.582_461_790_062_694),
            (5, 2, 2, 1.0, 0.1, 1.0, 2.0, 42.333_092_596_523_71, 11.420_238_602_378_91),
            (10, 2, 2, 27.631021115928547, 0.01, 0.2, 30.0, 14.492_422_813_913_173, 10.708_862_417_054_048),
            (100, 2, 2, 27.631021115928547, 0.01, 0.2, 30.0, 15.425133972262599, 10.902_107_053_968_923),
            (1000, 2, 2, 27.631021115928547, 0.01, 0.2, 30.0, 17.487_517_863_497_953, 12.295_267_815_715_345),
            (50, 3, 2, 41.44653167389282, 0.01, 0.15, 60.0, 20.691_554_737_917_937, 10.570_987_642_656_11),
            (500, 3, 2, 41.44653167389282, 0.01, 0.15, 60.0, 23.078_140_573_917_377, 11.035_151_177_397_6),
            (7, 1, 3, 0.5, 0.05, 2.0, 5.0, 40.428_236_090_280_33, 11.748_937_567_725_815),
            (123, 4, 2, 12.0, 0.2, 0.7, 11.0, 32.932_285_409_925_98, 13.493_114_410_072_552),
            (999, 1, 2, 2.0, 0.001, 1.5, 100.0, 32.139_787_017_444_28, 16.514_137_504_767_66),
            (1, 2, 3, 9.0, 0.9, 0.01, 9.5, 5.710_565_057_617_713, 1.495_029_469_331_559),
            (42, 2, 1, 3.5, 0.3, 3.0, 25.0, 15.888_114_479_261_604, 16.864_911_138_542_045),
            (77, 5, 5, 100.0, 0.02, 0.6, 40.0, 60.524_139_237_975_2, 20.008_084_113_808_4),
            (2048, 2, 2, 27.631021115928547, 0.1, 0.5, 30.0, 14.850_805_545_380_814, 14.654_508_234_689_096),
            (12, 3, 3, 18.0, 0.25, 1.2, 16.5, 22.333_937_092_438_28, 15.092_241_916_398_185),
            (300, 1, 1, 13.815510557964274, 0.01, 0.35, 10.0, 6.850_515_229_109_657, 12.201_317_308_109_159),
            (8, 4, 4, 64.0, 0.15, 0.05, 100.0, 23.245_223_958_233_627, 6.316_693_507_960_874),
            (60, 2, 4, 55.26204223185709, 0.05, 0.9, 75.0, 20.912_553_673_982_092, 20.337_508_667_985_97),
        ];
        for (t, k, d, lambda, delta, s, kappa, want_beta, want_gamma) in cases {
            let p = params(k, d, lambda, delta, s, kappa);
            assert_abs_diff_eq!(beta_radius(t, &p), want_beta, epsilon = 1e-11);
            assert_abs_diff_eq!(gamma_radius(t, &p), want_gamma, epsilon = 1e-11);
        }
    }

    #[test]
    fn radii_are_monotone_in_round_and_delta() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        for _ in 0..100 {
            let p = params(
                1 + (rng.random::<u32>() % 4) as usize,
                1 + (rng.random::<u32>() % 4) as usize,
                0.1 + rng.random::<f64>() * 30.0,
                0.01 + rng.random::<f64>() * 0.9,
                0.1 + rng.random::<f64>() * 3.0,
                1.0 + rng.random::<f64>() * 50.0,
            );
            let (t1, t2) = (3usize, 300usize);
            assert!(beta_radius(t1, &p) <= beta_radius(t2, &p));
            assert!(gamma_radius(t1, &p) <= gamma_radius(t2, &p));
            // Smaller delta means a larger radius, uniformly in t.
            let mut tighter = p;
            tighter.delta = p.delta / 2.0;
            for t in [0usize, 1, 10, 500] {
                assert!(beta_radius(t, &tighter) >= beta_radius(t, &p));
            }
        }
    }

    #[test]
    fn fresh_gram_state_is_scaled_identity() {
        let st = GramState::<f64>::new(3, 2.0, 0.5).unwrap();
        assert_eq!(st.t(), 1);
        for i in 0..3 {
            for j in 0..3 {
                let want_v = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(st.v()[(i, j)], want_v);
                assert_abs_diff_eq!(st.v_inv()[(i, j)], want_v);
            }
        }
    }

    #[test]
    fn sherman_morrison_is_exact_per_update() {
        let mut st = GramState::<f64>::new(2, 3.0, 1.0).unwrap();
        st.update(array![0.7, -0.4].view()).unwrap();
        let prod = st.v().dot(st.v_inv());
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)], want, epsilon = 1e-10);
            }
        }
        assert_eq!(st.t(), 2);
    }

    #[test]
    fn inverse_tracks_direct_solve_over_many_updates() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let mut st = GramState::<f64>::new(3, 5.0, 1.2).unwrap();
        for _ in 0..500 {
            let x = Array1::from_iter((0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0));
            st.update(x.view()).unwrap();
        }
        let direct = linalg::spd_inverse(&st.v().view()).unwrap();
        let mut max_err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                max_err = max_err.max((direct[(i, j)] - st.v_inv()[(i, j)]).abs());
            }
        }
        assert!(max_err <= 1e-8, "drift {max_err}");
        let prod = st.v().dot(st.v_inv());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn inv_norm_is_monotone_under_updates() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let mut st = GramState::<f64>::new(2, 2.0, 1.0).unwrap();
        let probe = array![0.9, -0.3];
        let mut prev = st.inv_norm(probe.view()).unwrap();
        for _ in 0..50 {
            let x = Array1::from_iter((0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0));
            st.update(x.view()).unwrap();
            let now = st.inv_norm(probe.view()).unwrap();
            assert!(now <= prev + 1e-12);
            prev = now;
        }
    }

    #[test]
    fn bonuses_at_zero_and_fresh_state() {
        let p = params(2, 2, 2.0, 0.1, 1.0, 4.0);
        let st = GramState::<f64>::new(2, p.kappa, p.lambda).unwrap();
        let zero = array![0.0, 0.0];
        assert_abs_diff_eq!(bonus_tight(zero.view(), 3.0, &p, &st).unwrap(), 0.0);
        assert_abs_diff_eq!(bonus_loose(zero.view(), 3.0, &p, &st).unwrap(), 0.0);
        let x = array![0.6, -0.8]; // unit norm
        let beta_t = 3.0;
        let want = 2.0 * p.r * p.l * beta_t * (p.kappa * (1.0 + 2.0 * p.s)).sqrt()
            / (p.kappa * p.lambda).sqrt();
        assert_abs_diff_eq!(
            bonus_tight(x.view(), beta_t, &p, &st).unwrap(),
            want,
            epsilon = 1e-13
        );
    }

    #[test]
    fn tight_bonus_shrinks_along_repeated_plays() {
        let p = params(2, 2, 1.0, 0.1, 0.5, 2.0);
        let mut st = GramState::<f64>::new(2, p.kappa, p.lambda).unwrap();
        let x = array![0.8, 0.1];
        let mut prev = f64::INFINITY;
        for t in 1..=30 {
            let b = bonus_tight(x.view(), beta_radius(t, &p), &p, &st).unwrap();
            // beta grows with t, but the norm shrinks faster along x itself.
            let b_fixed_beta = bonus_tight(x.view(), 1.0, &p, &st).unwrap();
            assert!(b_fixed_beta <= prev + 1e-12);
            prev = b_fixed_beta;
            let _ = b;
            st.update(x.view()).unwrap();
        }
    }

    #[test]
    fn loose_to_tight_ratio_is_arm_independent() {
        let p = params(2, 2, 27.631021115928547, 0.01, 0.2, 37.58193094950801);
        let mut st = GramState::<f64>::new(2, p.kappa, p.lambda).unwrap();
        st.update(array![0.3, 0.5].view()).unwrap();
        let t = 5;
        let (b, g) = (beta_radius(t, &p), gamma_radius(t, &p));
        let want_ratio = p.kappa * g / (b * (p.kappa * (1.0 + 2.0 * p.s)).sqrt());
        for x in [array![1.0, 0.0], array![-0.4, 2.0], array![0.1, 0.1]] {
            let bt = bonus_tight(x.view(), b, &p, &st).unwrap();
            let bl = bonus_loose(x.view(), g, &p, &st).unwrap();
            assert_abs_diff_eq!(bl / bt, want_ratio, epsilon = 1e-12);
        }
        // At the kappa upper bound for S = X = K = 1, the loose bonus dominates.
        let p1 = params(1, 1, 13.815510557964274, 0.01, 1.0, 37.58193094950801);
        for t in [1usize, 10, 100, 1000] {
            let ratio = p1.kappa * gamma_radius(t, &p1)
                / (beta_radius(t, &p1) * (p1.kappa * (1.0 + 2.0 * p1.s)).sqrt());
            assert!(ratio > 1.0, "t={t}: ratio {ratio}");
        }
    }

    #[test]
    fn membership_basics() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let mut h = InteractionHistory::new(2, 2).unwrap();
        for _ in 0..8 {
            let x = Array1::from_iter((0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0));
            h.push(x, (rng.random::<u32>() % 3) as usize).unwrap();
        }
        let lambda = 1.0;
        let s_bound = 1.0;
        let est = ParameterVector::new(2, 2, array![0.1, -0.2, 0.3, 0.05]).unwrap();
        // theta = estimate inside the ball: all three sets contain it.
        assert!(in_confidence_set(&est, &est, &h, lambda, s_bound, 0.5).unwrap());
        assert!(in_enlarged_confidence_set(&est, &est, &h, lambda, s_bound, 0.5).unwrap());
        let st = GramState::new(2, 2.0, lambda).unwrap();
        assert!(
            in_ellipsoid_confidence_set(&est, &est, &st, s_bound, 2.0, 0.5).unwrap()
        );
        // Outside the parameter ball: excluded regardless of distances.
        let far = ParameterVector::new(2, 2, array![2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(!in_confidence_set(&far, &est, &h, lambda, s_bound, 1e9).unwrap());
        assert!(!in_enlarged_confidence_set(&far, &est, &h, lambda, s_bound, 1e9).unwrap());
        assert!(
            !in_ellipsoid_confidence_set(&far, &est, &st, s_bound, 2.0, 1e9).unwrap()
        );
    }

    #[test]
    fn ellipsoid_reduces_to_euclidean_ball_on_fresh_state() {
        let st = GramState::<f64>::new(2, 4.0, 0.25).unwrap(); // kappa*lambda = 1
        let tilde = ParameterVector::zeros(2, 2).unwrap();
        let gamma_t = 0.5;
        let kappa = 4.0;
        // Fresh V = I, so membership is ||theta - tilde|| <= kappa*gamma*sqrt(kappa*lambda).
        let radius = kappa * gamma_t * (4.0 * 0.25f64).sqrt();
        let inside = ParameterVector::new(2, 2, array![radius - 1e-6, 0.0, 0.0, 0.0]).unwrap();
        let outside = ParameterVector::new(2, 2, array![radius + 1e-6, 0.0, 0.0, 0.0]).unwrap();
        let s_bound = 10.0;
        assert!(
            in_ellipsoid_confidence_set(&inside, &tilde, &st, s_bound, kappa, gamma_t).unwrap()
        );
        assert!(
            !in_ellipsoid_confidence_set(&outside, &tilde, &st, s_bound, kappa, gamma_t).unwrap()
        );
    }

    #[test]
    fn confidence_set_is_contained_in_enlarged_set() {
        let mut rng = ChaCha12Rng::seed_from_u64(66);
        for _ in 0..20 {
            let mut h = InteractionHistory::new(2, 2).unwrap();
            for _ in 0..10 {
                let x = Array1::from_iter((0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0));
                h.push(x, (rng.random::<u32>() % 3) as usize).unwrap();
            }
            let lambda = 1.0 + rng.random::<f64>() * 5.0;
            let s_bound = 1.0;
            let warm = ParameterVector::zeros(2, 2).unwrap();
            let est = crate::estimation::fit_mle(&h, lambda, &warm, 1e-8, 50)
                .unwrap()
                .estimate;
            let beta_t = 0.05 + rng.random::<f64>() * 0.5;
            let mut inside_c = 0usize;
            let mut inside_ct = 0usize;
            for _ in 0..60 {
                let cand = ParameterVector::new(
                    2,
                    2,
                    Array1::from_iter((0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0)),
                )
                .unwrap();
                let c = in_confidence_set(&cand, &est, &h, lambda, s_bound, beta_t).unwrap();
                let ct =
                    in_enlarged_confidence_set(&cand, &est, &h, lambda, s_bound, beta_t).unwrap();
                inside_c += usize::from(c);
                inside_ct += usize::from(ct);
                assert!(!c || ct, "containment violated");
            }
            assert!(inside_ct >= inside_c);
        }
    }

    #[test]
    fn ellipsoid_distances_reduce_to_euclidean_on_unit_gram() {
        let st = GramState::<f64>::new(2, 4.0, 0.25).unwrap(); // V = I
        let a = ParameterVector::new(2, 2, array![1.0, 0.0, 0.0, 2.0]).unwrap();
        let b = ParameterVector::zeros(2, 2).unwrap();
        let (inv_n, dir_n) = ellipsoid_distances(&a, &b, &st).unwrap();
        let want = 5.0f64.sqrt();
        assert_abs_diff_eq!(inv_n, want, epsilon = 1e-12);
        assert_abs_diff_eq!(dir_n, want, epsilon = 1e-12);
        // Once data accumulates the two weightings separate.
        let mut st = st;
        st.update(array![1.0, 0.0].view()).unwrap();
        let (inv_n, dir_n) = ellipsoid_distances(&a, &b, &st).unwrap();
        assert!(inv_n < want && dir_n > want);
    }

    #[test]
    fn membership_grid_writes_csv() {
        let h = InteractionHistory::<f64>::new(1, 1).unwrap();
        let st = GramState::new(1, 2.0, 1.0).unwrap();
        let est = ParameterVector::zeros(1, 1).unwrap();
        let grid: Vec<_> = [-0.5, 0.0, 0.5]
            .iter()
            .map(|v| ParameterVector::new(1, 1, array![*v]).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_membership_grid(&mut buf, &grid, &est, &est, &h, &st, 1.0, 1.0, 0.4, 0.4)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "theta_1,in_c,in_c_tilde,in_e");
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn bonus_params_validation_names_problems() {
        let mut p = params(2, 2, 1.0, 0.1, 1.0, 2.0);
        assert!(p.validate().is_ok());
        p.delta = 1.5;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("delta"), "{err}");
    }
}
