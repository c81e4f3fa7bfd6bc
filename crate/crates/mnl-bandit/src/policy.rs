//! The per-round agent: maintain history, refit, project, score arms and
//! select by the UCB rule. Variants differ only in the bonus formula.

use std::fmt;

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::confidence::{
    beta_radius, bonus_loose, bonus_tight, gamma_radius, BonusParams, GramState,
};
use crate::error::{Error, Result};
use crate::estimation::{fit_and_project, FitReport, InteractionHistory};
use crate::model::{expected_reward, ParameterVector};
use crate::Scalar;

/// Bonus rule used by the UCB decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Curvature-aware bonus (the main algorithm).
    Tight,
    /// Curvature-blind ellipsoid bonus (comparison arm).
    Loose,
    /// Zero bonus (control arm).
    Greedy,
    /// Ignores values; picks uniformly at random (control arm).
    Uniform,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Tight => "tight",
            Variant::Loose => "loose",
            Variant::Greedy => "greedy",
            Variant::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tight" => Ok(Variant::Tight),
            "loose" => Ok(Variant::Loose),
            "greedy" => Ok(Variant::Greedy),
            "uniform" => Ok(Variant::Uniform),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant '{other}' (expected tight|loose|greedy|uniform)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Agent configuration: bonus inputs plus solver settings.
#[derive(Debug, Clone)]
pub struct AgentConfig<T> {
    pub variant: Variant,
    pub lambda: T,
    pub bonus: BonusParams<T>,
    pub tol: T,
    pub max_iter: usize,
    /// Refit cadence in rounds; 1 refits every round.
    pub refit_period: usize,
}

impl<T: Scalar> AgentConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.bonus.validate()?;
        if self.refit_period == 0 {
            return Err(Error::InvalidArgument("refit_period must be >= 1".into()));
        }
        if !(self.lambda > T::zero()) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        if !(self.tol > T::zero()) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "solver needs tol > 0 and max_iter >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Ridge weight prescribed for a known horizon: `K * d * ln(T)`.
pub fn default_lambda<T: Scalar>(k: usize, d: usize, horizon: usize) -> T {
    T::from_usize(k * d).unwrap() * T::from_usize(horizon).unwrap().ln()
}

/// What [`Agent::observe`] did this round.
#[derive(Debug, Clone, Copy)]
pub struct ObserveOutcome<T> {
    pub refit: bool,
    pub converged: bool,
    pub gradient_norm: T,
    pub projection_active: bool,
}

/// A UCB agent for one episode. Owns its history, Gram state, fit and the
/// random stream used by the uniform control variant.
#[derive(Debug)]
pub struct Agent<T> {
    config: AgentConfig<T>,
    rho: Array1<T>,
    history: InteractionHistory<T>,
    fit: FitReport<T>,
    gram: GramState<T>,
    rng: ChaCha12Rng,
}

impl<T: Scalar> Agent<T> {
    pub fn new(
        k: usize,
        d: usize,
        rho: Array1<T>,
        config: AgentConfig<T>,
        rng: ChaCha12Rng,
    ) -> Result<Self> {
        config.validate()?;
        if rho.len() != k {
            return Err(Error::DimensionMismatch {
                what: "revenue vector",
                expected: k,
                actual: rho.len(),
            });
        }
        let history = InteractionHistory::new(k, d)?;
        let zero = ParameterVector::zeros(k, d)?;
        let fit = FitReport {
            estimate: zero.clone(),
            gradient_norm: T::zero(),
            iterations: 0,
            converged: true,
            projected: zero,
            projection_active: false,
        };
        let gram = GramState::new(d, config.bonus.kappa, config.lambda)?;
        Ok(Self {
            config,
            rho,
            history,
            fit,
            gram,
            rng,
        })
    }

    pub fn config(&self) -> &AgentConfig<T> {
        &self.config
    }

    pub fn history(&self) -> &InteractionHistory<T> {
        &self.history
    }

    pub fn fit(&self) -> &FitReport<T> {
        &self.fit
    }

    pub fn gram(&self) -> &GramState<T> {
        &self.gram
    }

    /// Current round index `t` (1-based): history length + 1.
    pub fn round(&self) -> usize {
        self.history.len() + 1
    }

    /// Overrides the current estimate (oracle/diagnostic mode). The pinned
    /// point survives until the next refit, so pair with a `refit_period`
    /// beyond the horizon to keep it for a whole episode.
    pub fn pin_estimate(&mut self, theta: ParameterVector<T>) -> Result<()> {
        if theta.k() != self.history.k() || theta.d() != self.history.d() {
            return Err(Error::DimensionMismatch {
                what: "pinned estimate",
                expected: self.history.k() * self.history.d(),
                actual: theta.len(),
            });
        }
        self.fit.estimate = theta.clone();
        self.fit.projected = theta;
        self.fit.gradient_norm = T::zero();
        self.fit.converged = true;
        self.fit.projection_active = false;
        Ok(())
    }

    /// The variant's exploration bonus at `x` for the current round.
    pub fn bonus_at(&self, x: ndarray::ArrayView1<T>) -> Result<T> {
        let t = self.round();
        match self.config.variant {
            Variant::Tight => bonus_tight(
                x,
                beta_radius(t, &self.config.bonus),
                &self.config.bonus,
                &self.gram,
            ),
            Variant::Loose => bonus_loose(
                x,
                gamma_radius(t, &self.config.bonus),
                &self.config.bonus,
                &self.gram,
            ),
            Variant::Greedy | Variant::Uniform => Ok(T::zero()),
        }
    }

    /// Scores every arm with `rho^T z(x, theta_t) + bonus(x)` and returns the
    /// argmax index (lowest index on ties) together with the per-arm values.
    /// The uniform variant computes the same values but draws its index
    /// uniformly at random.
    pub fn select_action(&mut self, arms: &[Array1<T>]) -> Result<(usize, Vec<T>)> {
        if arms.is_empty() {
            return Err(Error::EmptyDecisionSet);
        }
        let theta = &self.fit.projected;
        let t = self.round();
        let (beta_t, gamma_t) = (
            beta_radius(t, &self.config.bonus),
            gamma_radius(t, &self.config.bonus),
        );
        let mut values = Vec::with_capacity(arms.len());
        for arm in arms {
            let base = expected_reward(arm.view(), theta, self.rho.view())?;
            let bonus = match self.config.variant {
                Variant::Tight => bonus_tight(arm.view(), beta_t, &self.config.bonus, &self.gram)?,
                Variant::Loose => bonus_loose(arm.view(), gamma_t, &self.config.bonus, &self.gram)?,
                Variant::Greedy | Variant::Uniform => T::zero(),
            };
            values.push(base + bonus);
        }
        let index = match self.config.variant {
            Variant::Uniform => self.rng.random_range(0..arms.len()),
            _ => argmax_lowest_index(&values),
        };
        Ok((index, values))
    }

    /// Records `(arm, outcome)`, rank-one-updates the Gram state and refits
    /// on the configured cadence (warm-started, then projected to the
    /// parameter ball). Fit non-convergence is reported, not fatal.
    pub fn observe(&mut self, arm: &Array1<T>, outcome: usize) -> Result<ObserveOutcome<T>> {
        self.history.push(arm.clone(), outcome)?;
        self.gram.update(arm.view())?;
        let played_round = self.history.len();
        let refit = played_round.is_multiple_of(self.config.refit_period);
        if refit {
            self.fit = fit_and_project(
                &self.history,
                self.config.lambda,
                &self.fit.estimate,
                self.config.tol,
                self.config.max_iter,
                self.config.bonus.s,
            )?;
        }
        Ok(ObserveOutcome {
            refit,
            converged: self.fit.converged,
            gradient_norm: self.fit.gradient_norm,
            projection_active: self.fit.projection_active,
        })
    }
}

/// Index of the maximal value, lowest index on exact ties.
pub fn argmax_lowest_index<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
