//! Synthetic-problem generation, episode execution, regret accounting and
//! multi-seed batch aggregation.
//!
//! Reproducibility contract: every random quantity derives from one `u64`
//! seed through fixed ChaCha streams (0 = outcomes, 1 = agent, 2 = instance
//! draws), so a `(seed, config)` pair fully determines instances, traces and
//! aggregate tables, independent of worker count.

use std::io::Write;

use ndarray::Array1;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::confidence::{beta_radius, BonusParams};
use crate::error::{Error, Result};
use crate::model::{
    expected_reward, sample_outcome, ParameterVector, ProblemConstants,
};
use crate::policy::{default_lambda, Agent, AgentConfig, Variant};
use crate::Scalar;

const OUTCOME_STREAM: u64 = 0;
const AGENT_STREAM: u64 = 1;
const INSTANCE_STREAM: u64 = 2;

/// A synthetic decision problem: arms, the true parameter, revenues and the
/// derived constants.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T> {
    pub arms: Vec<Array1<T>>,
    pub theta_star: ParameterVector<T>,
    pub rho: Array1<T>,
    pub constants: ProblemConstants<T>,
    pub best_arm_index: usize,
    pub best_value: T,
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn k(&self) -> usize {
        self.theta_star.k()
    }

    pub fn d(&self) -> usize {
        self.theta_star.d()
    }
}

/// How the drawn true parameter is rescaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalePolicy<T> {
    /// Keep the raw draw (blocks ~ N(0, I/K), so E||theta*||^2 = d).
    Raw,
    /// Rescale `||theta*||` to the given value.
    STarget(T),
    /// Rescale so the closed-form kappa upper bound hits the given target.
    KappaTarget(T),
}

/// Root `a` of `e^a (1 + K e^a)^2 = kappa_target`, by bisection on [0, 20]
/// to absolute tolerance 1e-10. The left side at `a = 0` is `(1 + K)^2`;
/// targets below that are rejected.
pub fn solve_sx_for_kappa<T: Scalar>(kappa_target: T, k: usize) -> Result<T> {
    let kf = T::from_usize(k).unwrap();
    let f = |a: T| a.exp() * (T::one() + kf * a.exp()).powi(2);
    let floor = (T::one() + kf).powi(2);
    if kappa_target < floor {
        return Err(Error::InvalidArgument(format!(
            "kappa target {kappa_target} is below the attainable minimum {floor}"
        )));
    }
    let mut lo = T::zero();
    let mut hi = T::from_f64(20.0).unwrap();
    if kappa_target > f(hi) {
        return Err(Error::InvalidArgument(format!(
            "kappa target {kappa_target} exceeds the solvable range"
        )));
    }
    let tol = T::from_f64(1e-10).unwrap();
    while hi - lo > tol {
        let mid = (lo + hi) / T::from_f64(2.0).unwrap();
        if f(mid) < kappa_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / T::from_f64(2.0).unwrap())
}

fn standard_normal<T: Scalar, R: Rng>(rng: &mut R) -> T {
    T::from_f64(rng.sample::<f64, _>(rand_distr::StandardNormal)).unwrap()
}

/// Draws a problem instance: `n_arms` arms from N(0, I_d), per-option
/// parameter blocks from N(0, I_d / K) (so the raw signal-to-noise ratio is
/// K-invariant), revenues `rho = (1, 2, ..., K)`, then applies the scale
/// policy and fills the derived constants. The best arm is found by
/// exhaustive evaluation.
pub fn generate_problem<T: Scalar>(
    d: usize,
    k: usize,
    n_arms: usize,
    scale: ScalePolicy<T>,
    seed: u64,
) -> Result<ProblemInstance<T>> {
    if n_arms == 0 {
        return Err(Error::EmptyDecisionSet);
    }
    if k == 0 || d == 0 {
        return Err(Error::InvalidArgument("need k >= 1 and d >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(INSTANCE_STREAM);

    let arms: Vec<Array1<T>> = (0..n_arms)
        .map(|_| Array1::from_iter((0..d).map(|_| standard_normal(&mut rng))))
        .collect();
    let k_scale = T::from_usize(k).unwrap().sqrt().recip();
    let raw = Array1::from_iter((0..k * d).map(|_| standard_normal::<T, _>(&mut rng) * k_scale));
    let mut theta_star = ParameterVector::new(k, d, raw)?;

    let x_bound = arms
        .iter()
        .map(|a| a.iter().map(|v| *v * *v).sum::<T>().sqrt())
        .fold(T::zero(), |m, n| if n > m { n } else { m });

    match scale {
        ScalePolicy::Raw => {}
        ScalePolicy::STarget(s) => {
            theta_star = theta_star.scaled_to_norm(s)?;
        }
        ScalePolicy::KappaTarget(target) => {
            let sx = solve_sx_for_kappa(target, k)?;
            theta_star = theta_star.scaled_to_norm(sx / x_bound)?;
        }
    }

    let rho = Array1::from_iter((1..=k).map(|i| T::from_usize(i).unwrap()));
    let r_bound = rho.iter().map(|v| *v * *v).sum::<T>().sqrt();
    let constants = ProblemConstants::from_bounds(theta_star.norm(), r_bound, x_bound, k);

    let mut best_arm_index = 0usize;
    let mut best_value = T::neg_infinity();
    for (i, arm) in arms.iter().enumerate() {
        let v = expected_reward(arm.view(), &theta_star, rho.view())?;
        if v > best_value {
            best_value = v;
            best_arm_index = i;
        }
    }

    Ok(ProblemInstance {
        arms,
        theta_star,
        rho,
        constants,
        best_arm_index,
        best_value,
    })
}

/// One per-round record of an episode.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow<T> {
    pub t: usize,
    pub chosen_index: usize,
    pub instant_regret: T,
    pub cumulative_regret: T,
    pub bonus: T,
    pub covered: bool,
    pub gradient_norm: T,
}

/// Episode-level diagnostics gathered while the estimates were available.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeStats<T> {
    pub covered_all: bool,
    pub dominance_checked: usize,
    pub dominance_violations: usize,
    pub instant_bound_checked: usize,
    pub instant_bound_violations: usize,
    pub elliptical_lhs: T,
    pub elliptical_rhs: T,
    pub elliptical_ok: bool,
    pub fit_nonconverged_rounds: usize,
    pub projection_rounds: usize,
}

/// Full per-round record of one episode plus its diagnostics.
#[derive(Debug, Clone)]
pub struct RegretTrace<T> {
    pub variant: Variant,
    pub sweep_key: String,
    pub seed: u64,
    pub rows: Vec<TraceRow<T>>,
    pub stats: EpisodeStats<T>,
}

impl<T: Scalar> RegretTrace<T> {
    pub fn final_regret(&self) -> T {
        self.rows
            .last()
            .map(|r| r.cumulative_regret)
            .unwrap_or_else(T::zero)
    }
}

/// Builds the agent configuration implied by an instance's constants.
#[allow(clippy::too_many_arguments)]
pub fn agent_config_for_instance<T: Scalar>(
    instance: &ProblemInstance<T>,
    variant: Variant,
    lambda: Option<T>,
    delta: T,
    horizon: usize,
    tol: T,
    max_iter: usize,
    refit_period: usize,
) -> AgentConfig<T> {
    let lambda = lambda.unwrap_or_else(|| default_lambda(instance.k(), instance.d(), horizon));
    AgentConfig {
        variant,
        lambda,
        bonus: BonusParams {
            r: instance.constants.r,
            l: instance.constants.l_upper,
            kappa: instance.constants.kappa_upper,
            s: instance.constants.s,
            delta,
            lambda,
            d: instance.d(),
            k: instance.k(),
        },
        tol,
        max_iter,
        refit_period,
    }
}

/// Truth-side coverage state maintained incrementally: the data sums behind
/// `g(theta*)` and `H(theta*)` are append-only because the true parameter
/// never changes, so the per-round coverage test only pays one full pass for
/// the estimate's g-map.
struct TruthSide<T> {
    theta: ParameterVector<T>,
    lambda: T,
    g: Array1<T>,
    h: ndarray::Array2<T>,
}

impl<T: Scalar> TruthSide<T> {
    fn new(theta: ParameterVector<T>, lambda: T) -> Self {
        let (k, d) = (theta.k(), theta.d());
        let kd = k * d;
        let mut h = ndarray::Array2::zeros((kd, kd));
        for i in 0..kd {
            h[(i, i)] = lambda;
        }
        let g = theta.as_array().mapv(|v| lambda * v);
        Self { theta, lambda, g, h }
    }

    fn record(&mut self, x: &Array1<T>) -> Result<()> {
        let (k, d) = (self.theta.k(), self.theta.d());
        let z = crate::model::choice_probabilities(x.view(), &self.theta)?;
        for i in 0..k {
            let zi = z.option_probs[i];
            for p in 0..d {
                self.g[i * d + p] += zi * x[p];
            }
        }
        for bi in 0..k {
            for bj in 0..k {
                let delta = if bi == bj { T::one() } else { T::zero() };
                let w = z.option_probs[bi] * (delta - z.option_probs[bj]);
                for p in 0..d {
                    for q in 0..d {
                        self.h[(bi * d + p, bj * d + q)] += w * x[p] * x[q];
                    }
                }
            }
        }
        Ok(())
    }

    /// `theta*` in the g-map confidence set around the current estimate.
    fn covered(
        &self,
        history: &crate::estimation::InteractionHistory<T>,
        estimate: &ParameterVector<T>,
        s_bound: T,
        beta_t: T,
    ) -> Result<bool> {
        if self.theta.norm() > s_bound {
            return Ok(false);
        }
        let g_hat = crate::estimation::g_map(history, estimate, self.lambda)?;
        let diff = &self.g - &g_hat;
        let u = crate::linalg::solve_spd(&self.h.view(), &diff.view())?;
        Ok(diff.dot(&u).max(T::zero()).sqrt() <= beta_t)
    }
}

/// Runs `horizon` rounds of select / sample / observe against the instance,
/// recording per-round regret and diagnostics. Outcome randomness and agent
/// randomness come from independent sub-streams of `seed`.
pub fn run_episode<T: Scalar>(
    instance: &ProblemInstance<T>,
    config: &AgentConfig<T>,
    horizon: usize,
    seed: u64,
) -> Result<RegretTrace<T>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let mut outcome_rng = ChaCha12Rng::seed_from_u64(seed);
    outcome_rng.set_stream(OUTCOME_STREAM);
    let mut agent_rng = ChaCha12Rng::seed_from_u64(seed);
    agent_rng.set_stream(AGENT_STREAM);

    let mut agent = Agent::new(
        instance.k(),
        instance.d(),
        instance.rho.clone(),
        config.clone(),
        agent_rng,
    )?;

    let check_bounds = matches!(config.variant, Variant::Tight | Variant::Loose);
    let slack = T::from_f64(1e-9).unwrap();
    let one = T::one();

    let mut rows = Vec::with_capacity(horizon);
    let mut cumulative = T::zero();
    let mut stats = EpisodeStats {
        covered_all: true,
        dominance_checked: 0,
        dominance_violations: 0,
        instant_bound_checked: 0,
        instant_bound_violations: 0,
        elliptical_lhs: T::zero(),
        elliptical_rhs: T::zero(),
        elliptical_ok: true,
        fit_nonconverged_rounds: 0,
        projection_rounds: 0,
    };

    let mut truth = TruthSide::new(instance.theta_star.clone(), config.lambda);

    for t in 1..=horizon {
        let beta_t = beta_radius(t, &config.bonus);
        let covered = truth.covered(
            agent.history(),
            &agent.fit().estimate,
            config.bonus.s,
            beta_t,
        )?;
        stats.covered_all &= covered;

        if check_bounds {
            // UCB dominance at the best arm: the optimistic value must upper
            // bound the truth whenever the truth is covered.
            let best_arm = &instance.arms[instance.best_arm_index];
            let ucb_best = expected_reward(best_arm.view(), &agent.fit().projected, instance.rho.view())?
                + agent.bonus_at(best_arm.view())?;
            if covered {
                stats.dominance_checked += 1;
                if instance.best_value > ucb_best + slack {
                    stats.dominance_violations += 1;
                }
            }
        }

        let gradient_norm = agent.fit().gradient_norm;
        let (idx, _values) = agent.select_action(&instance.arms)?;
        let chosen = &instance.arms[idx];
        let bonus = agent.bonus_at(chosen.view())?;

        let wn = agent.gram().inv_norm(chosen.view())?;
        let wn2 = wn * wn;
        stats.elliptical_lhs += if wn2 < one { wn2 } else { one };

        let reward = expected_reward(chosen.view(), &instance.theta_star, instance.rho.view())?;
        let instant = instance.best_value - reward;
        cumulative += instant;

        if check_bounds && covered {
            stats.instant_bound_checked += 1;
            if instant > T::from_f64(2.0).unwrap() * bonus + slack {
                stats.instant_bound_violations += 1;
            }
        }

        let outcome = sample_outcome(chosen.view(), &instance.theta_star, &mut outcome_rng)?;
        let obs = agent.observe(chosen, outcome)?;
        truth.record(chosen)?;
        if obs.refit && !obs.converged {
            stats.fit_nonconverged_rounds += 1;
        }
        if obs.refit && obs.projection_active {
            stats.projection_rounds += 1;
        }

        rows.push(TraceRow {
            t,
            chosen_index: idx,
            instant_regret: instant,
            cumulative_regret: cumulative,
            bonus,
            covered,
            gradient_norm,
        });
    }

    let two = T::from_f64(2.0).unwrap();
    stats.elliptical_rhs = two * (agent.gram().log_det()? - agent.gram().log_det_initial());
    stats.elliptical_ok = stats.elliptical_lhs <= stats.elliptical_rhs + slack;

    Ok(RegretTrace {
        variant: config.variant,
        sweep_key: String::new(),
        seed,
        rows,
        stats,
    })
}

/// One point of a sweep: a problem geometry plus the variant to run.
#[derive(Debug, Clone)]
pub struct SweepPoint<T> {
    pub key: String,
    pub d: usize,
    pub k: usize,
    pub n_arms: usize,
    pub scale: ScalePolicy<T>,
    pub variant: Variant,
}

/// Batch request: sweep points x realizations.
#[derive(Debug, Clone)]
pub struct BatchSpec<T> {
    pub points: Vec<SweepPoint<T>>,
    pub horizon: usize,
    pub n_realizations: usize,
    pub base_seed: u64,
    /// `None` selects `K * d * ln(horizon)` per point.
    pub lambda: Option<T>,
    pub delta: T,
    pub tol: T,
    pub max_iter: usize,
    pub refit_period: usize,
}

/// Per-round aggregate of cumulative regret over realizations.
#[derive(Debug, Clone)]
pub struct AggregateRow<T> {
    pub variant: Variant,
    pub sweep_key: String,
    pub t: usize,
    pub mean_regret: T,
    pub std_regret: T,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct BatchResult<T> {
    pub traces: Vec<RegretTrace<T>>,
    pub aggregates: Vec<AggregateRow<T>>,
}

/// Runs every (point, realization) episode in a work pool of `jobs` threads
/// (0 = rayon default). Realization `i` draws a fresh instance and episode
/// randomness from `base_seed + i`, identically across sweep points, so
/// sweep comparisons are seed-paired. Results are assembled in (point,
/// realization) order regardless of completion order.
pub fn run_batch<T: Scalar>(spec: &BatchSpec<T>, jobs: usize) -> Result<BatchResult<T>> {
    if spec.points.is_empty() {
        return Err(Error::InvalidArgument("batch needs at least one point".into()));
    }
    if spec.n_realizations == 0 {
        return Err(Error::InvalidArgument("n_realizations must be >= 1".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..spec.points.len())
        .flat_map(|p| (0..spec.n_realizations).map(move |i| (p, i)))
        .collect();

    let run_one = |&(p, i): &(usize, usize)| -> Result<RegretTrace<T>> {
        let point = &spec.points[p];
        let seed = spec.base_seed.wrapping_add(i as u64);
        let instance = generate_problem(point.d, point.k, point.n_arms, point.scale, seed)?;
        let config = agent_config_for_instance(
            &instance,
            point.variant,
            spec.lambda,
            spec.delta,
            spec.horizon,
            spec.tol,
            spec.max_iter,
            spec.refit_period,
        );
        let mut trace = run_episode(&instance, &config, spec.horizon, seed)?;
        trace.sweep_key = point.key.clone();
        Ok(trace)
    };

    let traces: Vec<RegretTrace<T>> = if jobs == 1 {
        tasks.iter().map(run_one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(run_one).collect::<Result<_>>())?
    };

    let mut aggregates = Vec::with_capacity(spec.points.len() * spec.horizon);
    for (p, point) in spec.points.iter().enumerate() {
        let group = &traces[p * spec.n_realizations..(p + 1) * spec.n_realizations];
        let n = T::from_usize(group.len()).unwrap();
        for t in 1..=spec.horizon {
            let values: Vec<T> = group.iter().map(|tr| tr.rows[t - 1].cumulative_regret).collect();
            let mean = values.iter().copied().sum::<T>() / n;
            let var = values
                .iter()
                .map(|v| (*v - mean) * (*v - mean))
                .sum::<T>()
                / n;
            aggregates.push(AggregateRow {
                variant: point.variant,
                sweep_key: point.key.clone(),
                t,
                mean_regret: mean,
                std_regret: var.sqrt(),
                n: group.len(),
            });
        }
    }

    Ok(BatchResult { traces, aggregates })
}

/// Coverage report over a set of traces.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    /// Fraction of episodes in which the truth was covered at EVERY round.
    pub uniform_rate: f64,
    /// Per-round marginal coverage rates.
    pub per_round_rates: Vec<f64>,
}

/// Fraction of episodes whose coverage flag held at all rounds, plus the
/// per-round marginal rates.
pub fn coverage_audit<T: Scalar>(traces: &[RegretTrace<T>]) -> CoverageReport {
    if traces.is_empty() {
        return CoverageReport {
            uniform_rate: 0.0,
            per_round_rates: Vec::new(),
        };
    }
    let horizon = traces.iter().map(|t| t.rows.len()).max().unwrap_or(0);
    let mut per_round = vec![0usize; horizon];
    let mut counts = vec![0usize; horizon];
    let mut uniform = 0usize;
    for tr in traces {
        if tr.rows.iter().all(|r| r.covered) {
            uniform += 1;
        }
        for r in &tr.rows {
            counts[r.t - 1] += 1;
            if r.covered {
                per_round[r.t - 1] += 1;
            }
        }
    }
    CoverageReport {
        uniform_rate: uniform as f64 / traces.len() as f64,
        per_round_rates: per_round
            .iter()
            .zip(counts.iter())
            .map(|(c, n)| if *n == 0 { 0.0 } else { *c as f64 / *n as f64 })
            .collect(),
    }
}

pub const TRACE_CSV_HEADER: &str =
    "variant,sweep_key,seed,t,chosen_index,r_t,R_t,bonus,covered,grad_norm";
pub const AGGREGATE_CSV_HEADER: &str = "variant,sweep_key,t,mean_R,std_R,n";

/// Writes the per-round trace CSV. Formatting is plain `Display`, so output
/// is byte-stable across runs and worker counts.
pub fn write_trace_csv<T: Scalar, W: Write>(out: &mut W, traces: &[RegretTrace<T>]) -> Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for tr in traces {
        for r in &tr.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                tr.variant,
                tr.sweep_key,
                tr.seed,
                r.t,
                r.chosen_index,
                r.instant_regret,
                r.cumulative_regret,
                r.bonus,
                u8::from(r.covered),
                r.gradient_norm
            )?;
        }
    }
    Ok(())
}

/// Writes the aggregate CSV (one row per variant, sweep key and round).
pub fn write_aggregate_csv<T: Scalar, W: Write>(
    out: &mut W,
    aggregates: &[AggregateRow<T>],
) -> Result<()> {
    writeln!(out, "{AGGREGATE_CSV_HEADER}")?;
    for a in aggregates {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            a.variant, a.sweep_key, a.t, a.mean_regret, a.std_regret, a.n
        )?;
    }
    Ok(())
}
