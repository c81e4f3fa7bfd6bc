//! Regularized maximum-likelihood estimation from interaction history.
//!
//! The objective is the ridge-penalized log-likelihood of the MNL choice
//! model. It is strictly concave (the negated Hessian dominates `lambda I`),
//! so a damped Newton ascent with Armijo backtracking finds the unique
//! maximizer in a handful of steps, warm-started across rounds.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{mean_value_jacobian, ParameterVector};
use crate::Scalar;

/// Logits are clamped to this magnitude before exponentiation so pathological
/// parameter sweeps cannot produce infinities.
const LOGIT_CLAMP: f64 = 700.0;

#[derive(Debug, Clone)]
struct Record<T> {
    action: Array1<T>,
    outcome: usize,
    // x x^T cached once per record; Hessian rebuilds only re-weight it.
    outer: Array2<T>,
}

/// Ordered `(action, outcome)` pairs observed so far.
#[derive(Debug, Clone)]
pub struct InteractionHistory<T> {
    k: usize,
    d: usize,
    records: Vec<Record<T>>,
}

impl<T: Scalar> InteractionHistory<T> {
    pub fn new(k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "history needs k >= 1 and d >= 1, got k={k}, d={d}"
            )));
        }
        Ok(Self {
            k,
            d,
            records: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, action: Array1<T>, outcome: usize) -> Result<()> {
        if action.len() != self.d {
            return Err(Error::DimensionMismatch {
                what: "history action",
                expected: self.d,
                actual: action.len(),
            });
        }
        if outcome > self.k {
            return Err(Error::OutcomeOutOfRange {
                outcome,
                k: self.k,
            });
        }
        let mut outer = Array2::zeros((self.d, self.d));
        for i in 0..self.d {
            for j in 0..self.d {
                outer[(i, j)] = action[i] * action[j];
            }
        }
        self.records.push(Record {
            action,
            outcome,
            outer,
        });
        Ok(())
    }

    pub fn actions(&self) -> impl Iterator<Item = ArrayView1<'_, T>> {
        self.records.iter().map(|r| r.action.view())
    }

    pub fn outcomes(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.outcome)
    }

    pub fn max_action_norm(&self) -> T {
        let mut m = T::zero();
        for r in &self.records {
            let n = r.action.iter().map(|v| *v * *v).sum::<T>().sqrt();
            if n > m {
                m = n;
            }
        }
        m
    }
}

/// Outcome of one MLE fit plus the feasibility projection.
#[derive(Debug, Clone)]
pub struct FitReport<T> {
    /// Unconstrained maximizer of the regularized log-likelihood.
    pub estimate: ParameterVector<T>,
    pub gradient_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Point actually used by the policy: equals `estimate` when it already
    /// lies in the parameter ball, otherwise the projected point.
    pub projected: ParameterVector<T>,
    pub projection_active: bool,
}

/// Reusable K-sized buffer for the per-record softmax evaluations that
/// dominate fitting and projection cost; keeps the hot loops allocation-free.
struct SoftmaxScratch<T> {
    work: Vec<T>,
}

impl<T: Scalar> SoftmaxScratch<T> {
    fn new(k: usize) -> Self {
        Self {
            work: vec![T::zero(); k],
        }
    }

    /// Fills `work` with clamped logits, converts them to option
    /// probabilities in place, and returns `(z0, lse)`.
    #[inline]
    fn eval(&mut self, theta: &[T], k: usize, d: usize, action: &[T]) -> (T, T) {
        let cap = T::from_f64(LOGIT_CLAMP).unwrap();
        let mut m = T::zero();
        for i in 0..k {
            let mut s = T::zero();
            let base = i * d;
            for p in 0..d {
                s += theta[base + p] * action[p];
            }
            s = if s > cap {
                cap
            } else if s < -cap {
                -cap
            } else {
                s
            };
            if s > m {
                m = s;
            }
            self.work[i] = s;
        }
        let e0 = (-m).exp();
        let mut sum = e0;
        for i in 0..k {
            let e = (self.work[i] - m).exp();
            self.work[i] = e;
            sum += e;
        }
        let lse_value = m + sum.ln();
        let inv = sum.recip();
        for i in 0..k {
            self.work[i] *= inv;
        }
        (e0 * inv, lse_value)
    }

    #[inline]
    fn probs(&self) -> &[T] {
        &self.work
    }
}

#[inline]
fn accumulate_weighted_outer<T: Scalar>(
    target: &mut Array2<T>,
    weights: impl Fn(usize, usize) -> T,
    outer: &Array2<T>,
    k: usize,
    d: usize,
) {
    for bi in 0..k {
        for bj in 0..k {
            let w = weights(bi, bj);
            for p in 0..d {
                for q in 0..d {
                    target[(bi * d + p, bj * d + q)] += w * outer[(p, q)];
                }
            }
        }
    }
}

/// One pass over the records computing the objective value and, optionally,
/// the gradient, the Hessian of the negated objective and the g-map. Shared
/// by every estimation entry point so the softmax work is done exactly once.
struct FusedEval<T> {
    value: T,
    gradient: Option<Array1<T>>,
    hessian: Option<Array2<T>>,
    g: Option<Array1<T>>,
}

fn fused_eval<T: Scalar>(
    history: &InteractionHistory<T>,
    theta: &ParameterVector<T>,
    lambda: T,
    want_gradient: bool,
    want_hessian: bool,
    want_g: bool,
) -> FusedEval<T> {
    let (k, d) = (history.k(), history.d());
    let kd = k * d;
    let two = T::from_f64(2.0).unwrap();
    let theta_slice = theta.as_array().as_slice().expect("contiguous theta");

    let norm_sq = theta_slice.iter().map(|v| *v * *v).sum::<T>();
    let mut value = -lambda / two * norm_sq;
    let mut gradient = want_gradient.then(|| Array1::from_iter(theta_slice.iter().map(|v| -lambda * *v)));
    let mut hess = want_hessian.then(|| {
        let mut h = Array2::zeros((kd, kd));
        for i in 0..kd {
            h[(i, i)] = lambda;
        }
        h
    });
    let mut g = want_g.then(|| Array1::from_iter(theta_slice.iter().map(|v| lambda * *v)));

    let mut scratch = SoftmaxScratch::new(k);
    for r in &history.records {
        let action = r.action.as_slice().expect("contiguous action");
        let (_z0, lse_value) = scratch.eval(theta_slice, k, d, action);
        let z = scratch.probs();
        let chosen = if r.outcome == 0 {
            T::zero()
        } else {
            // Recover the clamped logit from the stored probability is not
            // possible after normalization, so recompute the single dot.
            let base = (r.outcome - 1) * d;
            let cap = T::from_f64(LOGIT_CLAMP).unwrap();
            let mut s = T::zero();
            for p in 0..d {
                s += theta_slice[base + p] * action[p];
            }
            s.min(cap).max(-cap)
        };
        value += chosen - lse_value;

        if let Some(grad) = gradient.as_mut() {
            let gs = grad.as_slice_mut().expect("contiguous gradient");
            for (i, zi) in z.iter().enumerate() {
                let indicator = if r.outcome == i + 1 { T::one() } else { T::zero() };
                let coeff = indicator - *zi;
                let base = i * d;
                for p in 0..d {
                    gs[base + p] += coeff * action[p];
                }
            }
        }
        if let Some(gv) = g.as_mut() {
            let gs = gv.as_slice_mut().expect("contiguous g");
            for (i, zi) in z.iter().enumerate() {
                let base = i * d;
                for p in 0..d {
                    gs[base + p] += *zi * action[p];
                }
            }
        }
        if let Some(h) = hess.as_mut() {
            accumulate_weighted_outer(
                h,
                |i, j| {
                    let delta = if i == j { T::one() } else { T::zero() };
                    z[i] * (delta - z[j])
                },
                &r.outer,
                k,
                d,
            );
        }
    }

    FusedEval {
        value,
        gradient,
        hessian: hess,
        g,
    }
}

fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

fn check_compatible<T: Scalar>(
    history: &InteractionHistory<T>,
    theta: &ParameterVector<T>,
) -> Result<()> {
    if history.k() != theta.k() || history.d() != theta.d() {
        return Err(Error::DimensionMismatch {
            what: "history/parameter shape",
            expected: history.k() * history.d(),
            actual: theta.len(),
        });
    }
    Ok(())
}

/// Regularized log-likelihood `sum_s log z_{y_s}(x_s, theta) - lambda/2 ||theta||^2`.
pub fn log_likelihood<T: Scalar>(
    history: &InteractionHistory<T>,
    theta: &ParameterVector<T>,
    lambda: T,
) -> Result<T> {
    check_lambda(lambda)?;
    check_compatible(history, theta)?;
    Ok(fused_eval(history, theta, lambda, false, false, false).value)
}

/// Gradient of the regularized log-likelihood; block `i` is
/// `sum_s (1{y_s = i} - z_i(x_s, theta)) x_s - lambda theta_i`.
pub fn log_likelihood_gradient<T: Scalar>(
    history: &InteractionHistory<T>,
    theta: &ParameterVector<T>,
    lambda: T,
) -> Result<Array1<T>> {
    check_lambda(lambda)?;
    check_compatible(history, theta)?;
    Ok(fused_eval(history, theta, lambda, true, false, false)
        .gradient
        .unwrap())
}

/// Hessian of the NEGATED regularized log-likelihood:
/// `lambda I + sum_s A(x_s, theta) (x) x_s x_s^T`, assembled blockwise.
pub fn hessian<T: Scalar>(
    history: &InteractionHistory<T>,
    theta: &ParameterVector<T>,
    lambda: T,
) -> Result<Array2<T>> {
    check_lambda(lambda)?;
    check_compatible(history, theta)?;
    Ok(fused_eval(history, theta, lambda, false, true, false)
        .hessian
        .unwrap())
}

/// The map `g(theta) = lambda theta + sum_s z(x_s, theta) (x) x_s` whose
/// differences linearize through the path-averaged Gram matrix.
pub fn g_map<T: Scalar>(
    history: &InteractionHistory<T>,
    theta: &ParameterVector<T>,
    lambda: T,
) -> Result<Array1<T>> {
    check_lambda(lambda)?;
    check_compatible(history, theta)?;
    Ok(fused_eval(history, theta, lambda, false, false, true)
        .g
        .unwrap())
}

/// Path-averaged Gram matrix
/// `G(theta1, theta2) = lambda I + sum_s B(x_s, theta1, theta2) (x) x_s x_s^T`.
///
/// Used by the invariant suite only, never by the agent loop.
pub fn gram_matrix<T: Scalar>(
    history: &InteractionHistory<T>,
    theta1: &ParameterVector<T>,
    theta2: &ParameterVector<T>,
    lambda: T,
    nodes: usize,
) -> Result<Array2<T>> {
    check_lambda(lambda)?;
    check_compatible(history, theta1)?;
    check_compatible(history, theta2)?;
    let (k, d) = (history.k(), history.d());
    let kd = k * d;
    let mut g = Array2::zeros((kd, kd));
    for i in 0..kd {
        g[(i, i)] = lambda;
    }
    for r in &history.records {
        let b = mean_value_jacobian(r.action.view(), theta1, theta2, nodes)?;
        let b = b.as_array();
        for bi in 0..k {
            for bj in 0..k {
                let w = b[(bi, bj)];
                for p in 0..d {
                    for q in 0..d {
                        g[(bi * d + p, bj * d + q)] += w * r.outer[(p, q)];
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Damped Newton ascent on the regularized log-likelihood.
///
/// Runs until the gradient norm falls below `tol` or `max_iter` Newton steps
/// have been taken; each step is an Armijo backtracking line search with at
/// most 30 halvings. Returns the iterate with `projected = estimate`; callers
/// that need feasibility apply [`project_feasible`] afterwards.
pub fn fit_mle<T: Scalar>(
    history: &InteractionHistory<T>,
    lambda: T,
    warm_start: &ParameterVector<T>,
    tol: T,
    max_iter: usize,
) -> Result<FitReport<T>> {
    check_lambda(lambda)?;
    check_compatible(history, warm_start)?;
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let armijo = T::from_f64(1e-4).unwrap();
    let half = T::from_f64(0.5).unwrap();

    let mut theta = warm_start.clone();
    let first = fused_eval(history, &theta, lambda, true, false, false);
    let mut grad = first.gradient.unwrap();
    let mut value = first.value;
    let mut gnorm = norm2(&grad);
    let mut iterations = 0usize;

    while gnorm > tol && iterations < max_iter {
        let h = fused_eval(history, &theta, lambda, false, true, false)
            .hessian
            .unwrap();
        let step = linalg::solve_spd(&h.view(), &grad.view())?;
        let slope = grad.dot(&step);
        // Near the optimum the predicted gain drops below the objective's
        // floating-point noise; the sufficient-decrease test must not stall
        // on differences it cannot measure.
        let noise = T::epsilon() * (T::one() + value.abs()) * T::from_f64(8.0).unwrap();
        let mut eta = T::one();
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = theta.with_entries(theta.as_array() + &step.mapv(|v| v * eta))?;
            let cand_value = fused_eval(history, &candidate, lambda, false, false, false).value;
            if cand_value >= value + armijo * eta * slope - noise {
                theta = candidate;
                accepted = true;
                break;
            }
            eta *= half;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        let next = fused_eval(history, &theta, lambda, true, false, false);
        grad = next.gradient.unwrap();
        value = next.value;
        gnorm = norm2(&grad);
    }

    let converged = gnorm <= tol;
    Ok(FitReport {
        projected: theta.clone(),
        estimate: theta,
        gradient_norm: gnorm,
        iterations,
        converged,
        projection_active: false,
    })
}

fn norm2<T: Scalar>(v: &Array1<T>) -> T {
    v.iter().map(|u| *u * *u).sum::<T>().sqrt()
}

/// Weighted distance `||g(theta) - g_hat||_{H(theta)^{-1}}` squared,
/// computed from a single fused pass over the records.
fn projection_objective<T: Scalar>(
    history: &InteractionHistory<T>,
    theta: &ParameterVector<T>,
    g_hat: &Array1<T>,
    lambda: T,
) -> Result<T> {
    let eval = fused_eval(history, theta, lambda, false, true, true);
    let diff = eval.g.unwrap() - g_hat;
    let h = eval.hessian.unwrap();
    let u = linalg::solve_spd(&h.view(), &diff.view())?;
    Ok(diff.dot(&u))
}

fn project_to_ball<T: Scalar>(v: &Array1<T>, radius: T) -> Array1<T> {
    let n = norm2(v);
    if n <= radius {
        v.clone()
    } else {
        v.mapv(|u| u * (radius / n))
    }
}

/// Feasible estimator: the MLE itself when it lies in the parameter ball,
/// otherwise (approximately) the ball point minimizing the inverse-Hessian
/// weighted distance between the g-maps.
///
/// The fallback is projected gradient descent on the squared objective,
/// initialized at the radial rescaling, with central-finite-difference
/// gradients (step 1e-5), backtracking step sizes, re-projection onto the
/// ball each step, and termination once the iterate moves less than 1e-7 or
/// after 200 steps. The best iterate seen is returned, so the result can
/// never be worse than the radial rescaling.
pub fn project_feasible<T: Scalar>(
    estimate: &ParameterVector<T>,
    history: &InteractionHistory<T>,
    lambda: T,
    s_bound: T,
) -> Result<ParameterVector<T>> {
    check_lambda(lambda)?;
    check_compatible(history, estimate)?;
    if !(s_bound > T::zero()) {
        return Err(Error::InvalidArgument("S must be positive".into()));
    }
    if estimate.norm() <= s_bound {
        return Ok(estimate.clone());
    }

    let g_hat = g_map(history, estimate, lambda)?;
    let fd_step = T::from_f64(1e-5).unwrap();
    let move_tol = T::from_f64(1e-7).unwrap();
    let half = T::from_f64(0.5).unwrap();

    let mut current = project_to_ball(estimate.as_array(), s_bound);
    let mut current_obj =
        projection_objective(history, &estimate.with_entries(current.clone())?, &g_hat, lambda)?;
    let mut best = current.clone();
    let mut best_obj = current_obj;
    // The accepted step size carries over between iterations so the search
    // does not re-pay the initial halvings every step.
    let mut eta_init = T::one();

    for _ in 0..200 {
        // Central-difference gradient of the full objective (the weight
        // matrix depends on theta, so no closed form is available).
        let mut grad = Array1::zeros(current.len());
        for i in 0..current.len() {
            let mut plus = current.clone();
            let mut minus = current.clone();
            plus[i] += fd_step;
            minus[i] -= fd_step;
            let fp = projection_objective(
                history,
                &estimate.with_entries(plus)?,
                &g_hat,
                lambda,
            )?;
            let fm = projection_objective(
                history,
                &estimate.with_entries(minus)?,
                &g_hat,
                lambda,
            )?;
            grad[i] = (fp - fm) / (fd_step + fd_step);
        }

        let mut eta = eta_init;
        let mut next = None;
        for _ in 0..30 {
            let candidate = project_to_ball(&(&current - &grad.mapv(|g| g * eta)), s_bound);
            let cand_obj = projection_objective(
                history,
                &estimate.with_entries(candidate.clone())?,
                &g_hat,
                lambda,
            )?;
            if cand_obj < current_obj {
                next = Some((candidate, cand_obj));
                break;
            }
            eta *= half;
        }
        let Some((candidate, cand_obj)) = next else {
            break;
        };
        eta_init = (eta * T::from_f64(4.0).unwrap()).min(T::one());
        let moved = norm2(&(&candidate - &current));
        // Descent is geometric here; once a step stops changing the
        // objective in the sixth digit the remaining cap is pure cost.
        let rel_gain = (current_obj - cand_obj) / current_obj.abs().max(T::min_positive_value());
        current = candidate;
        current_obj = cand_obj;
        if current_obj < best_obj {
            best = current.clone();
            best_obj = current_obj;
        }
        if moved < move_tol || rel_gain < T::from_f64(1e-4).unwrap() {
            break;
        }
    }
    estimate.with_entries(best)
}

/// Convenience: fit then project, producing a complete report.
pub fn fit_and_project<T: Scalar>(
    history: &InteractionHistory<T>,
    lambda: T,
    warm_start: &ParameterVector<T>,
    tol: T,
    max_iter: usize,
    s_bound: T,
) -> Result<FitReport<T>> {
    let mut report = fit_mle(history, lambda, warm_start, tol, max_iter)?;
    if report.estimate.norm() > s_bound {
        report.projected = project_feasible(&report.estimate, history, lambda, s_bound)?;
        report.projection_active = true;
    }
    Ok(report)
}
