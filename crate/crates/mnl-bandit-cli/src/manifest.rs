//! Machine-readable run manifest: echoes the effective configuration, the
//! code version, per-episode diagnostics and any runtime warnings.

use serde::{Deserialize, Serialize};

use mnl_bandit::simulator::RegretTrace;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub variant: String,
    pub sweep_key: String,
    pub seed: u64,
    pub final_regret: f64,
    pub covered_all: bool,
    pub dominance_checked: usize,
    pub dominance_violations: usize,
    pub instant_bound_checked: usize,
    pub instant_bound_violations: usize,
    pub elliptical_ok: bool,
    pub fit_nonconverged_rounds: usize,
    pub projection_rounds: usize,
}

impl EpisodeSummary {
    pub fn from_trace(trace: &RegretTrace<f64>) -> Self {
        Self {
            variant: trace.variant.to_string(),
            sweep_key: trace.sweep_key.clone(),
            seed: trace.seed,
            final_regret: trace.final_regret(),
            covered_all: trace.stats.covered_all,
            dominance_checked: trace.stats.dominance_checked,
            dominance_violations: trace.stats.dominance_violations,
            instant_bound_checked: trace.stats.instant_bound_checked,
            instant_bound_violations: trace.stats.instant_bound_violations,
            elliptical_ok: trace.stats.elliptical_ok,
            fit_nonconverged_rounds: trace.stats.fit_nonconverged_rounds,
            projection_rounds: trace.stats.projection_rounds,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub axis: Option<String>,
    /// Effective configuration (file contents plus CLI overrides); re-parses
    /// to a `RunConfig` equal to the one the run used.
    pub config: RunConfig,
    pub sweep_keys: Vec<String>,
    pub warnings: Vec<String>,
    pub episodes: Vec<EpisodeSummary>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(
        command: &str,
        axis: Option<&str>,
        config: RunConfig,
        sweep_keys: Vec<String>,
        traces: &[RegretTrace<f64>],
    ) -> Self {
        let episodes: Vec<EpisodeSummary> = traces.iter().map(EpisodeSummary::from_trace).collect();
        let mut warnings = Vec::new();
        let total_rounds: usize = traces.iter().map(|t| t.rows.len()).sum();
        let nonconverged: usize = traces.iter().map(|t| t.stats.fit_nonconverged_rounds).sum();
        if total_rounds > 0 && nonconverged as f64 / total_rounds as f64 > 0.01 {
            warnings.push(format!(
                "fit non-convergence in {nonconverged} of {total_rounds} rounds (> 1%)"
            ));
        }
        if episodes.iter().any(|e| !e.elliptical_ok) {
            warnings.push("elliptical-potential inequality violated on some trace".into());
        }
        Self {
            tool: "mnl-bandit-cli".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            axis: axis.map(str::to_string),
            config,
            sweep_keys,
            warnings,
            episodes,
            files: vec!["traces.csv".into(), "aggregate.csv".into()],
        }
    }
}
