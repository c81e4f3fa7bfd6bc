//! Run configuration: a TOML file with every field explicit. Unknown keys
//! are rejected and validation errors name the offending field.

use serde::{Deserialize, Serialize};

use mnl_bandit::policy::Variant;
use mnl_bandit::simulator::{ScalePolicy, SweepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Tight,
    Loose,
    Greedy,
    Uniform,
}

impl VariantName {
    pub fn to_variant(self) -> Variant {
        match self {
            VariantName::Tight => Variant::Tight,
            VariantName::Loose => Variant::Loose,
            VariantName::Greedy => Variant::Greedy,
            VariantName::Uniform => Variant::Uniform,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariantName::Tight => "tight",
            VariantName::Loose => "loose",
            VariantName::Greedy => "greedy",
            VariantName::Uniform => "uniform",
        }
    }
}

/// Either the literal string `"auto"` or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr {
    Number(f64),
    Keyword(String),
}

/// Either the literal string `"none"` or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoneOr {
    Number(f64),
    Keyword(String),
}

impl NoneOr {
    pub fn value(&self) -> Option<f64> {
        match self {
            NoneOr::Number(v) => Some(*v),
            NoneOr::Keyword(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // Problem geometry and experiment size.
    pub d: usize,
    pub k: usize,
    pub n_arms: usize,
    pub horizon: usize,
    pub delta: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub out_dir: String,
    /// Worker threads for the episode pool; 0 lets the pool pick.
    pub jobs: usize,

    // Policy and solver.
    pub variant: VariantName,
    /// `"auto"` selects `k * d * ln(horizon)`.
    pub lambda: AutoOr,
    pub tol: f64,
    pub max_iter: usize,
    pub refit_period: usize,

    // Instance scaling: at most one of the two may be a number.
    /// `"none"` or a target for the closed-form kappa upper bound.
    pub kappa_target: NoneOr,
    /// `"none"` or a target norm for the true parameter.
    pub s_target: NoneOr,

    // Sweep axes used by the `sweep` subcommand.
    pub k_values: Vec<usize>,
    pub kappa_values: Vec<f64>,
    pub variant_values: Vec<VariantName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    Kappa,
    Variant,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Kappa => "kappa",
            SweepAxis::Variant => "variant",
        }
    }
}

impl RunConfig {
    /// Field-by-field validation; returns one message per problem.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let positive = [
            ("d", self.d),
            ("k", self.k),
            ("n_arms", self.n_arms),
            ("horizon", self.horizon),
            ("n_realizations", self.n_realizations),
            ("max_iter", self.max_iter),
            ("refit_period", self.refit_period),
        ];
        for (name, value) in positive {
            if value == 0 {
                problems.push(format!("{name}: must be >= 1"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            problems.push(format!("delta: must lie in (0, 1), got {}", self.delta));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            problems.push(format!("tol: must be positive and finite, got {}", self.tol));
        }
        match &self.lambda {
            AutoOr::Number(v) if !(*v > 0.0 && v.is_finite()) => {
                problems.push(format!("lambda: must be positive, got {v}"));
            }
            AutoOr::Keyword(word) if word != "auto" => {
                problems.push(format!("lambda: expected a number or \"auto\", got \"{word}\""));
            }
            AutoOr::Keyword(_) if self.horizon < 2 => {
                problems.push("lambda: \"auto\" = k*d*ln(horizon) needs horizon >= 2".into());
            }
            _ => {}
        }
        match &self.kappa_target {
            NoneOr::Number(v) => {
                let floor = (1.0 + self.k as f64).powi(2);
                if !(*v >= floor) {
                    problems.push(format!(
                        "kappa_target: must be >= (1+k)^2 = {floor}, got {v}"
                    ));
                }
            }
            NoneOr::Keyword(word) if word != "none" => {
                problems.push(format!(
                    "kappa_target: expected a number or \"none\", got \"{word}\""
                ));
            }
            _ => {}
        }
        match &self.s_target {
            NoneOr::Number(v) if !(*v > 0.0 && v.is_finite()) => {
                problems.push(format!("s_target: must be positive, got {v}"));
            }
            NoneOr::Keyword(word) if word != "none" => {
                problems.push(format!(
                    "s_target: expected a number or \"none\", got \"{word}\""
                ));
            }
            _ => {}
        }
        if self.kappa_target.value().is_some() && self.s_target.value().is_some() {
            problems.push("kappa_target/s_target: set at most one of the two".into());
        }
        if self.out_dir.is_empty() {
            problems.push("out_dir: must not be empty".into());
        }
        if self.k_values.contains(&0) {
            problems.push("k_values: entries must be >= 1".into());
        }
        problems
    }

    pub fn lambda_option(&self) -> Option<f64> {
        match &self.lambda {
            AutoOr::Number(v) => Some(*v),
            AutoOr::Keyword(_) => None,
        }
    }

    fn base_scale(&self) -> ScalePolicy<f64> {
        if let Some(kappa) = self.kappa_target.value() {
            ScalePolicy::KappaTarget(kappa)
        } else if let Some(s) = self.s_target.value() {
            ScalePolicy::STarget(s)
        } else {
            ScalePolicy::Raw
        }
    }

    /// Sweep points for a plain run (one point, key `default`).
    pub fn run_points(&self) -> Vec<SweepPoint<f64>> {
        vec![SweepPoint {
            key: "default".into(),
            d: self.d,
            k: self.k,
            n_arms: self.n_arms,
            scale: self.base_scale(),
            variant: self.variant.to_variant(),
        }]
    }

    /// Sweep points along the given axis; other fields come from the base
    /// config (in particular the K sweep keeps the configured scale policy).
    pub fn sweep_points(&self, axis: SweepAxis) -> Result<Vec<SweepPoint<f64>>, String> {
        let points = match axis {
            SweepAxis::K => {
                if self.k_values.is_empty() {
                    return Err("k_values: empty sweep".into());
                }
                if let Some(target) = self.kappa_target.value() {
                    for k in &self.k_values {
                        let floor = (1.0 + *k as f64).powi(2);
                        if target < floor {
                            return Err(format!(
                                "kappa_target: {target} is below the attainable minimum {floor} for k = {k}"
                            ));
                        }
                    }
                }
                self.k_values
                    .iter()
                    .map(|k| {
                        let mut p = self.run_points().remove(0);
                        p.key = format!("K={k}");
                        p.k = *k;
                        p
                    })
                    .collect()
            }
            SweepAxis::Kappa => {
                if self.kappa_values.is_empty() {
                    return Err("kappa_values: empty sweep".into());
                }
                let floor = (1.0 + self.k as f64).powi(2);
                for v in &self.kappa_values {
                    if *v < floor {
                        return Err(format!(
                            "kappa_values: {v} is below the attainable minimum {floor}"
                        ));
                    }
                }
                self.kappa_values
                    .iter()
                    .map(|kappa| {
                        let mut p = self.run_points().remove(0);
                        p.key = format!("kappa={kappa}");
                        p.scale = ScalePolicy::KappaTarget(*kappa);
                        p
                    })
                    .collect()
            }
            SweepAxis::Variant => {
                if self.variant_values.is_empty() {
                    return Err("variant_values: empty sweep".into());
                }
                self.variant_values
                    .iter()
                    .map(|v| {
                        let mut p = self.run_points().remove(0);
                        p.key = format!("variant={}", v.as_str());
                        p.variant = v.to_variant();
                        p
                    })
                    .collect()
            }
        };
        Ok(points)
    }

    /// Points matching a saved sweep key, for audit replay.
    pub fn points_for_keys(&self, keys: &[String]) -> Result<Vec<SweepPoint<f64>>, String> {
        let mut all = self.run_points();
        for axis in [SweepAxis::K, SweepAxis::Kappa, SweepAxis::Variant] {
            if let Ok(points) = self.sweep_points(axis) {
                all.extend(points);
            }
        }
        keys.iter()
            .map(|key| {
                all.iter()
                    .find(|p| &p.key == key)
                    .cloned()
                    .ok_or_else(|| format!("sweep key '{key}' does not match the config"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
d = 2
k = 2
n_arms = 20
horizon = 1000
delta = 0.01
n_realizations = 20
seed = 42
out_dir = "out"
jobs = 0
variant = "tight"
lambda = "auto"
tol = 1e-8
max_iter = 100
refit_period = 1
kappa_target = 30.0
s_target = "none"
k_values = [1, 2, 3]
kappa_values = [30.0, 60.0, 100.0]
variant_values = ["tight", "loose"]
"#;

    #[test]
    fn parses_and_validates_example() {
        let cfg: RunConfig = toml::from_str(EXAMPLE).unwrap();
        assert!(cfg.validate().is_empty());
        assert_eq!(cfg.lambda_option(), None);
        assert_eq!(cfg.kappa_target.value(), Some(30.0));
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = format!("{EXAMPLE}\nmystery = 1\n");
        let err = toml::from_str::<RunConfig>(&bad).unwrap_err();
        assert!(err.to_string().contains("mystery"));
    }

    #[test]
    fn names_bad_delta() {
        let cfg: RunConfig = toml::from_str(&EXAMPLE.replace("delta = 0.01", "delta = 1.5")).unwrap();
        let problems = cfg.validate();
        assert!(problems.iter().any(|p| p.starts_with("delta:")), "{problems:?}");
    }

    #[test]
    fn rejects_double_scaling() {
        let cfg: RunConfig =
            toml::from_str(&EXAMPLE.replace("s_target = \"none\"", "s_target = 1.0")).unwrap();
        let problems = cfg.validate();
        assert!(problems.iter().any(|p| p.contains("at most one")), "{problems:?}");
    }

    #[test]
    fn sweep_points_carry_keys() {
        let cfg: RunConfig = toml::from_str(EXAMPLE).unwrap();
        let ks = cfg.sweep_points(SweepAxis::K).unwrap();
        assert_eq!(
            ks.iter().map(|p| p.key.as_str()).collect::<Vec<_>>(),
            vec!["K=1", "K=2", "K=3"]
        );
        let kappas = cfg.sweep_points(SweepAxis::Kappa).unwrap();
        assert_eq!(kappas[2].key, "kappa=100");
        assert_eq!(kappas[2].scale, ScalePolicy::KappaTarget(100.0));
        let variants = cfg.sweep_points(SweepAxis::Variant).unwrap();
        assert_eq!(variants[1].variant, Variant::Loose);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg: RunConfig = toml::from_str(EXAMPLE).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
