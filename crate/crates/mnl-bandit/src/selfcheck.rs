//! Runnable subset of the analytic property suite.
//!
//! Every check is deterministic given the seed and reports pass/fail with a
//! short detail string, so the CLI can print one line per property. The
//! optional mutation hook exists for verifying that the checks actually have
//! teeth (a deliberately corrupted Jacobian must trip the M-matrix check).

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::estimation::{
    fit_mle, g_map, gram_matrix, hessian, log_likelihood, log_likelihood_gradient,
    InteractionHistory,
};
use crate::linalg;
use crate::model::{
    choice_probabilities, empirical_spectrum_extremes, jacobian, kappa_bounds, l_upper_bound,
    mean_value_jacobian, ParameterVector,
};

/// Deliberate defect injected into a check (used to test the harness).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Flip the sign of one off-diagonal Jacobian entry before validation.
    JacobianSignFlip,
}

#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn pass(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: true,
            detail,
        }
    }

    fn fail(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: false,
            detail,
        }
    }
}

/// Sampling effort per check.
#[derive(Debug, Clone, Copy)]
pub struct Effort {
    pub fd_instances: usize,
    pub identity_instances: usize,
    pub loewner_instances: usize,
    pub matrix_draws: usize,
    pub kappa_samples: usize,
}

impl Effort {
    /// Quick profile for the CLI selfcheck (well under the runtime budget).
    pub fn quick() -> Self {
        Self {
            fd_instances: 10,
            identity_instances: 100,
            loewner_instances: 10,
            matrix_draws: 1000,
            kappa_samples: 20_000,
        }
    }

    /// Full profile used by the acceptance suite.
    pub fn full() -> Self {
        Self {
            fd_instances: 25,
            identity_instances: 100,
            loewner_instances: 20,
            matrix_draws: 1000,
            kappa_samples: 100_000,
        }
    }
}

fn rand_unit<R: Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>() * 2.0 - 1.0
}

fn random_history(rng: &mut ChaCha12Rng, k: usize, d: usize, t: usize) -> InteractionHistory<f64> {
    let mut h = InteractionHistory::new(k, d).unwrap();
    for _ in 0..t {
        let x = Array1::from_iter((0..d).map(|_| rand_unit(rng)));
        let y = (rng.random::<u32>() as usize) % (k + 1);
        h.push(x, y).unwrap();
    }
    h
}

fn random_theta(rng: &mut ChaCha12Rng, k: usize, d: usize, scale: f64) -> ParameterVector<f64> {
    ParameterVector::new(
        k,
        d,
        Array1::from_iter((0..k * d).map(|_| rand_unit(rng) * scale)),
    )
    .unwrap()
}

fn dims(rng: &mut ChaCha12Rng) -> (usize, usize, usize) {
    let k = 1 + (rng.random::<u32>() % 4) as usize;
    let d = 1 + (rng.random::<u32>() % 3) as usize;
    let t = 5 + (rng.random::<u32>() % 46) as usize;
    (k, d, t)
}

fn check_gradient_fd(rng: &mut ChaCha12Rng, instances: usize) -> PropertyResult {
    let name = "gradient_fd";
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (k, d, t) = dims(rng);
        let h = random_history(rng, k, d, t);
        let th = random_theta(rng, k, d, 1.0);
        let lambda = 0.5 + rng.random::<f64>();
        let g = log_likelihood_gradient(&h, &th, lambda).unwrap();
        let step = 1e-6;
        for i in 0..k * d {
            let mut up = th.as_array().clone();
            let mut dn = th.as_array().clone();
            up[i] += step;
            dn[i] -= step;
            let fp = log_likelihood(&h, &th.with_entries(up).unwrap(), lambda).unwrap();
            let fm = log_likelihood(&h, &th.with_entries(dn).unwrap(), lambda).unwrap();
            let fd = (fp - fm) / (2.0 * step);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1e-8));
        }
    }
    if worst < 1e-5 {
        PropertyResult::pass(name, format!("max rel err {worst:.2e} < 1e-5"))
    } else {
        PropertyResult::fail(name, format!("max rel err {worst:.2e} >= 1e-5"))
    }
}

fn check_hessian_fd(rng: &mut ChaCha12Rng, instances: usize) -> PropertyResult {
    let name = "hessian_fd";
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (k, d, _) = dims(rng);
        let t = 5 + (rng.random::<u32>() % 16) as usize;
        let h = random_history(rng, k, d, t);
        let th = random_theta(rng, k, d, 1.0);
        let lambda = 0.5 + rng.random::<f64>();
        let hm = hessian(&h, &th, lambda).unwrap();
        let step = 1e-6;
        for j in 0..k * d {
            let mut up = th.as_array().clone();
            let mut dn = th.as_array().clone();
            up[j] += step;
            dn[j] -= step;
            let gp = log_likelihood_gradient(&h, &th.with_entries(up).unwrap(), lambda).unwrap();
            let gm = log_likelihood_gradient(&h, &th.with_entries(dn).unwrap(), lambda).unwrap();
            for i in 0..k * d {
                let fd = -(gp[i] - gm[i]) / (2.0 * step);
                worst = worst.max((fd - hm[(i, j)]).abs() / hm[(i, j)].abs().max(1e-4));
            }
        }
    }
    if worst < 1e-4 {
        PropertyResult::pass(name, format!("max rel err {worst:.2e} < 1e-4"))
    } else {
        PropertyResult::fail(name, format!("max rel err {worst:.2e} >= 1e-4"))
    }
}

fn check_mean_value_identity(rng: &mut ChaCha12Rng, instances: usize) -> PropertyResult {
    let name = "mean_value_identity";
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = 1 + (rng.random::<u32>() % 4) as usize;
        let d = 1 + (rng.random::<u32>() % 3) as usize;
        let t1 = random_theta(rng, k, d, 2.0 / (k as f64 * d as f64).sqrt());
        let t2 = random_theta(rng, k, d, 2.0 / (k as f64 * d as f64).sqrt());
        let x = Array1::from_iter((0..d).map(|_| rand_unit(rng)));
        let z1 = choice_probabilities(x.view(), &t1).unwrap();
        let z2 = choice_probabilities(x.view(), &t2).unwrap();
        let b = mean_value_jacobian(x.view(), &t1, &t2, 64).unwrap();
        // [B (x) x^T](t1 - t2): block j of the difference contributes
        // B[i][j] * x^T (t1_j - t2_j) to component i.
        for i in 0..k {
            let mut rhs = 0.0;
            for j in 0..k {
                let dot: f64 = x
                    .iter()
                    .zip(t1.block(j).iter().zip(t2.block(j).iter()))
                    .map(|(xv, (a, b2))| xv * (a - b2))
                    .sum();
                rhs += b.as_array()[(i, j)] * dot;
            }
            let lhs = z1.option_probs[i] - z2.option_probs[i];
            worst = worst.max((lhs - rhs).abs());
        }
    }
    if worst < 1e-8 {
        PropertyResult::pass(name, format!("max abs err {worst:.2e} < 1e-8"))
    } else {
        PropertyResult::fail(name, format!("max abs err {worst:.2e} >= 1e-8"))
    }
}

fn check_gram_identity(rng: &mut ChaCha12Rng, instances: usize) -> PropertyResult {
    let name = "gram_identity";
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = 1 + (rng.random::<u32>() % 3) as usize;
        let d = 1 + (rng.random::<u32>() % 2) as usize;
        let t = 3 + (rng.random::<u32>() % 10) as usize;
        let h = random_history(rng, k, d, t);
        let lambda = 0.5 + rng.random::<f64>();
        let t1 = random_theta(rng, k, d, 1.0);
        let t2 = random_theta(rng, k, d, 1.0);
        let g1 = g_map(&h, &t1, lambda).unwrap();
        let g2 = g_map(&h, &t2, lambda).unwrap();
        let gm = gram_matrix(&h, &t1, &t2, lambda, 64).unwrap();
        let lin = gm.dot(&(t1.as_array() - t2.as_array()));
        for i in 0..k * d {
            worst = worst.max(((g1[i] - g2[i]) - lin[i]).abs());
        }
    }
    if worst < 1e-8 {
        PropertyResult::pass(name, format!("max abs err {worst:.2e} < 1e-8"))
    } else {
        PropertyResult::fail(name, format!("max abs err {worst:.2e} >= 1e-8"))
    }
}

fn kron_identity_gram(v: &Array2<f64>, k: usize) -> Array2<f64> {
    let d = v.nrows();
    let mut out = Array2::zeros((k * d, k * d));
    for b in 0..k {
        for p in 0..d {
            for q in 0..d {
                out[(b * d + p, b * d + q)] = v[(p, q)];
            }
        }
    }
    out
}

fn check_loewner(rng: &mut ChaCha12Rng, instances: usize) -> (PropertyResult, PropertyResult) {
    let kron_name = "loewner_gram_vs_kron_gram";
    let sc_name = "loewner_self_concordance";
    let mut worst_kron = f64::INFINITY;
    let mut worst_sc = f64::INFINITY;
    for _ in 0..instances {
        let (k, d, t) = (2usize, 2usize, 10usize);
        let s_bound = 1.0;
        let h = random_history(rng, k, d, t);
        let lambda = 0.5 + rng.random::<f64>();
        let t1 = random_theta(rng, k, d, 1.0).scaled_to_norm(rng.random::<f64>() * s_bound).unwrap();
        let t2 = random_theta(rng, k, d, 1.0).scaled_to_norm(rng.random::<f64>() * s_bound).unwrap();
        let gm = gram_matrix(&h, &t1, &t2, lambda, 64).unwrap();

        // kappa upper bound for this data: X = max action norm.
        let x_bound = h.max_action_norm();
        let (_, kappa_up) = kappa_bounds(s_bound, x_bound, k);
        let mut v = Array2::eye(d) * (kappa_up * lambda);
        for x in h.actions() {
            for p in 0..d {
                for q in 0..d {
                    v[(p, q)] += x[p] * x[q];
                }
            }
        }
        let scaled = kron_identity_gram(&v, k).mapv(|u| u / kappa_up);
        let diff = &gm - &scaled;
        worst_kron = worst_kron.min(linalg::min_eigenvalue(&diff.view()).unwrap());

        let factor = 1.0 / (1.0 + 2.0 * s_bound);
        for th in [&t1, &t2] {
            let hm = hessian(&h, th, lambda).unwrap();
            let diff = &gm - &hm.mapv(|u| u * factor);
            worst_sc = worst_sc.min(linalg::min_eigenvalue(&diff.view()).unwrap());
        }
    }
    let kron = if worst_kron >= -1e-8 {
        PropertyResult::pass(kron_name, format!("min eig slack {worst_kron:.2e} >= -1e-8"))
    } else {
        PropertyResult::fail(kron_name, format!("min eig slack {worst_kron:.2e} < -1e-8"))
    };
    let sc = if worst_sc >= -1e-8 {
        PropertyResult::pass(sc_name, format!("min eig slack {worst_sc:.2e} >= -1e-8"))
    } else {
        PropertyResult::fail(sc_name, format!("min eig slack {worst_sc:.2e} < -1e-8"))
    };
    (kron, sc)
}

fn check_m_matrix(
    rng: &mut ChaCha12Rng,
    draws: usize,
    mutation: Option<Mutation>,
) -> (PropertyResult, PropertyResult) {
    let m_name = "m_matrix";
    let s_name = "eigen_sandwich";
    let mut m_ok = true;
    let mut m_detail = format!("{draws} random draws satisfy dominance and sign pattern");
    let mut sandwich_ok = true;
    let mut s_detail = format!("row-sum bounds hold on {draws} draws");
    for n in 0..draws {
        let k = 1 + (rng.random::<u32>() % 4) as usize;
        let d = 1 + (rng.random::<u32>() % 3) as usize;
        let th = random_theta(rng, k, d, 2.0);
        let x = Array1::from_iter((0..d).map(|_| rand_unit(rng)));
        let a = jacobian(x.view(), &th).unwrap();
        let a = if mutation == Some(Mutation::JacobianSignFlip) && n == 0 && k >= 2 {
            let mut entries = a.as_array().clone();
            entries[(0, 1)] = -entries[(0, 1)];
            entries[(1, 0)] = -entries[(1, 0)];
            match crate::model::JacobianMatrix::new(entries) {
                Ok(bad) => bad,
                Err(e) => {
                    m_ok = false;
                    m_detail = format!("injected defect detected: {e}");
                    continue;
                }
            }
        } else {
            a
        };
        if a.validate().is_err() {
            m_ok = false;
            m_detail = "invariant violated on a random draw".into();
        }
        match crate::model::eigen_sandwich(&a) {
            Ok((lo, mid, hi)) => {
                if !(lo <= mid + 1e-10 && mid <= hi + 1e-10) {
                    sandwich_ok = false;
                    s_detail = format!("sandwich violated: {lo} / {mid} / {hi}");
                }
            }
            Err(e) => {
                sandwich_ok = false;
                s_detail = format!("validation error: {e}");
            }
        }
    }
    let m = if m_ok {
        PropertyResult::pass(m_name, m_detail)
    } else {
        PropertyResult::fail(m_name, m_detail)
    };
    let s = if sandwich_ok {
        PropertyResult::pass(s_name, s_detail)
    } else {
        PropertyResult::fail(s_name, s_detail)
    };
    (m, s)
}

fn check_kappa_sandwich(rng: &mut ChaCha12Rng, samples: usize) -> PropertyResult {
    let name = "kappa_sandwich";
    let (s, x, k) = (1.0, 1.0, 2usize);
    let (min_eig, max_eig) = empirical_spectrum_extremes(s, x, k, 2, samples, rng).unwrap();
    let (kl, ku) = kappa_bounds(s, x, k);
    let lo = 1.0 / ku;
    let hi = 1.0 / kl;
    let l_up = l_upper_bound(s, x, k);
    if min_eig >= lo - 1e-9 && min_eig <= hi + 1e-9 && max_eig <= l_up + 1e-9 {
        PropertyResult::pass(
            name,
            format!("min eig {min_eig:.6} in [{lo:.6}, {hi:.6}], max eig {max_eig:.6} <= {l_up:.6}"),
        )
    } else {
        PropertyResult::fail(
            name,
            format!("min eig {min_eig:.6} outside [{lo:.6}, {hi:.6}] or max {max_eig:.6} > {l_up:.6}"),
        )
    }
}

fn check_k1_reduction(rng: &mut ChaCha12Rng) -> PropertyResult {
    let name = "k1_logistic_reduction";
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let th = random_theta(rng, 1, 2, 2.0);
        let x = Array1::from_iter((0..2).map(|_| rand_unit(rng)));
        let logit: f64 = th.block(0).dot(&x.view());
        let sigma = 1.0 / (1.0 + (-logit).exp());
        let z = choice_probabilities(x.view(), &th).unwrap();
        worst = worst.max((z.option_probs[0] - sigma).abs());
        let a = jacobian(x.view(), &th).unwrap();
        worst = worst.max((a.as_array()[(0, 0)] - sigma * (1.0 - sigma)).abs());
    }
    if worst <= 1e-14 {
        PropertyResult::pass(name, format!("max abs err {worst:.2e} <= 1e-14"))
    } else {
        PropertyResult::fail(name, format!("max abs err {worst:.2e} > 1e-14"))
    }
}

fn check_mle_stationarity(rng: &mut ChaCha12Rng, instances: usize) -> PropertyResult {
    let name = "mle_stationarity";
    let tol = 1e-8;
    for _ in 0..instances {
        let (k, d, t) = dims(rng);
        let h = random_history(rng, k, d, t);
        let lambda = 0.5 + rng.random::<f64>();
        let report = fit_mle(&h, lambda, &ParameterVector::zeros(k, d).unwrap(), tol, 100).unwrap();
        if !report.converged || report.gradient_norm > tol {
            return PropertyResult::fail(
                name,
                format!(
                    "fit did not reach tolerance: converged={} grad={}",
                    report.converged, report.gradient_norm
                ),
            );
        }
    }
    PropertyResult::pass(name, format!("{instances} fits reached grad <= {tol:.0e}"))
}

/// Runs the fast analytic property subset; `mutation` deliberately corrupts
/// one draw so the harness itself can be validated.
pub fn run_selfcheck(
    effort: Effort,
    mutation: Option<Mutation>,
    seed: u64,
) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut results = vec![
        check_gradient_fd(&mut rng, effort.fd_instances),
        check_hessian_fd(&mut rng, effort.fd_instances),
        check_mean_value_identity(&mut rng, effort.identity_instances),
        check_gram_identity(&mut rng, effort.loewner_instances),
    ];
    let (kron, sc) = check_loewner(&mut rng, effort.loewner_instances);
    results.push(kron);
    results.push(sc);
    let (m, sandwich) = check_m_matrix(&mut rng, effort.matrix_draws, mutation);
    results.push(m);
    results.push(sandwich);
    results.push(check_kappa_sandwich(&mut rng, effort.kappa_samples));
    results.push(check_k1_reduction(&mut rng));
    results.push(check_mle_stationarity(&mut rng, 10));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_selfcheck_passes() {
        let results = run_selfcheck(Effort::quick(), None, 12345).unwrap();
        for r in &results {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
        }
        assert_eq!(results.len(), 11);
    }

    #[test]
    fn injected_sign_error_trips_m_matrix_check() {
        let results = run_selfcheck(Effort::quick(), Some(Mutation::JacobianSignFlip), 12345)
            .unwrap();
        let m = results.iter().find(|r| r.name == "m_matrix").unwrap();
        assert!(!m.passed, "mutation was not detected");
    }
}
