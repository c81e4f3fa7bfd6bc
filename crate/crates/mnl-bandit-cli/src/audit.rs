//! Offline audit of a saved run directory: structural row checks, coverage
//! summary, an elliptical-potential recheck via instance replay, and the
//! dominance counts recorded in the manifest.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};

use mnl_bandit::confidence::GramState;
use mnl_bandit::policy::default_lambda;
use mnl_bandit::simulator::generate_problem;

use crate::manifest::Manifest;

#[derive(Debug, Clone)]
struct ParsedRow {
    variant: String,
    sweep_key: String,
    seed: u64,
    t: usize,
    chosen_index: usize,
    r_t: f64,
    cum: f64,
    covered: u8,
}

fn parse_trace_csv(text: &str) -> anyhow::Result<Vec<ParsedRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("traces.csv is empty"))?;
    if header != mnl_bandit::simulator::TRACE_CSV_HEADER {
        bail!("traces.csv header mismatch: {header}");
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            bail!("row {}: expected 10 fields, got {}", i + 2, fields.len());
        }
        let row = ParsedRow {
            variant: fields[0].to_string(),
            sweep_key: fields[1].to_string(),
            seed: fields[2].parse().with_context(|| format!("row {}: seed", i + 2))?,
            t: fields[3].parse().with_context(|| format!("row {}: t", i + 2))?,
            chosen_index: fields[4]
                .parse()
                .with_context(|| format!("row {}: chosen_index", i + 2))?,
            r_t: fields[5].parse().with_context(|| format!("row {}: r_t", i + 2))?,
            cum: fields[6].parse().with_context(|| format!("row {}: R_t", i + 2))?,
            covered: fields[8]
                .parse()
                .with_context(|| format!("row {}: covered", i + 2))?,
        };
        if !row.r_t.is_finite() || !row.cum.is_finite() {
            bail!("row {}: non-finite regret values", i + 2);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Returns the printed report on success; any structural defect (missing or
/// corrupt file, negative regret, non-monotone cumulative regret, replay
/// mismatch) is an error the caller maps to exit code 3.
pub fn audit_dir(dir: &Path) -> anyhow::Result<String> {
    let manifest_path = dir.join("manifest.json");
    let traces_path = dir.join("traces.csv");
    let manifest: Manifest = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path)
            .with_context(|| format!("missing manifest: {}", manifest_path.display()))?,
    )
    .context("corrupt manifest.json")?;
    let rows = parse_trace_csv(
        &std::fs::read_to_string(&traces_path)
            .with_context(|| format!("missing traces: {}", traces_path.display()))?,
    )?;
    if rows.is_empty() {
        bail!("traces.csv has no rows");
    }

    let mut report = String::new();
    let config = &manifest.config;

    // Structural checks per (variant, sweep_key, seed) group.
    let mut groups: BTreeMap<(String, String, u64), Vec<&ParsedRow>> = BTreeMap::new();
    for row in &rows {
        if row.r_t < 0.0 {
            bail!(
                "tampered trace: negative r_t at (variant={}, sweep_key={}, seed={}, t={})",
                row.variant,
                row.sweep_key,
                row.seed,
                row.t
            );
        }
        if row.covered > 1 {
            bail!("tampered trace: covered flag {} out of range", row.covered);
        }
        groups
            .entry((row.variant.clone(), row.sweep_key.clone(), row.seed))
            .or_default()
            .push(row);
    }
    for ((variant, key, seed), group) in &groups {
        let mut prev = 0.0;
        for row in group {
            if row.cum + 1e-12 < prev {
                bail!(
                    "tampered trace: R_t decreases at (variant={variant}, sweep_key={key}, seed={seed}, t={})",
                    row.t
                );
            }
            prev = row.cum;
        }
        if group.len() != config.horizon {
            bail!(
                "trace group (variant={variant}, sweep_key={key}, seed={seed}) has {} rows, expected {}",
                group.len(),
                config.horizon
            );
        }
    }
    report.push_str(&format!(
        "structure: {} rows in {} episode groups, all r_t >= 0 and R_t nondecreasing\n",
        rows.len(),
        groups.len()
    ));

    // Coverage of the uniform-in-t event.
    let episodes = groups.len();
    let uniform = groups
        .values()
        .filter(|g| g.iter().all(|r| r.covered == 1))
        .count();
    let rate = uniform as f64 / episodes as f64;
    let slack = 3.0 * (config.delta * (1.0 - config.delta) / episodes as f64).sqrt();
    report.push_str(&format!(
        "coverage: uniform-in-t rate {rate:.4} over {episodes} episodes (1 - delta - 3se = {:.4})\n",
        1.0 - config.delta - slack
    ));

    // Elliptical-potential recheck by replaying the instance arms.
    let keys: Vec<String> = groups.keys().map(|(_, key, _)| key.clone()).collect();
    let points = manifest
        .config
        .points_for_keys(&keys)
        .map_err(|e| anyhow!("cannot replay sweep keys: {e}"))?;
    let mut checked = 0usize;
    for (((_, _key, seed), group), point) in groups.iter().zip(points.iter()) {
        let instance = generate_problem::<f64>(point.d, point.k, point.n_arms, point.scale, *seed)
            .map_err(|e| anyhow!("instance replay failed: {e}"))?;
        let lambda = config
            .lambda_option()
            .unwrap_or_else(|| default_lambda(point.k, point.d, config.horizon));
        let mut gram = GramState::new(point.d, instance.constants.kappa_upper, lambda)
            .map_err(|e| anyhow!("gram replay failed: {e}"))?;
        let mut lhs = 0.0f64;
        for row in group {
            let arm = instance
                .arms
                .get(row.chosen_index)
                .ok_or_else(|| anyhow!("chosen index {} out of range", row.chosen_index))?;
            let wn = gram.inv_norm(arm.view()).map_err(|e| anyhow!("{e}"))?;
            lhs += (wn * wn).min(1.0);
            gram.update(arm.view()).map_err(|e| anyhow!("{e}"))?;
        }
        let rhs = 2.0
            * (gram.log_det().map_err(|e| anyhow!("{e}"))? - gram.log_det_initial());
        if lhs > rhs + 1e-9 {
            bail!(
                "elliptical-potential inequality fails on replay (seed {seed}): {lhs} > {rhs}"
            );
        }
        checked += 1;
    }
    report.push_str(&format!(
        "elliptical potential: holds on all {checked} replayed episodes\n"
    ));

    // Dominance and instantaneous-bound counts recorded at run time.
    let dom_viol: usize = manifest.episodes.iter().map(|e| e.dominance_violations).sum();
    let dom_checked: usize = manifest.episodes.iter().map(|e| e.dominance_checked).sum();
    let inst_viol: usize = manifest
        .episodes
        .iter()
        .map(|e| e.instant_bound_violations)
        .sum();
    let inst_checked: usize = manifest
        .episodes
        .iter()
        .map(|e| e.instant_bound_checked)
        .sum();
    report.push_str(&format!(
        "ucb dominance: {dom_viol} violations over {dom_checked} covered rounds\n"
    ));
    report.push_str(&format!(
        "instantaneous bound: {inst_viol} violations over {inst_checked} covered rounds\n"
    ));
    if !manifest.warnings.is_empty() {
        report.push_str(&format!("manifest warnings: {:?}\n", manifest.warnings));
    }
    Ok(report)
}
