//! The chain bias/variance/RMSE sweep.
//!
//! For each (target policy, beta) grid point the sweep draws seeded batches
//! of trajectories from the behavior policy, evaluates the smoothed
//! estimator with exact oracle advantages, and reports bias against the
//! exact value difference together with the estimator's per-trajectory
//! standard deviation and RMSE (`rmse^2 = bias^2 + std^2` by construction).
//! Using exact advantages isolates the occupancy-measure bias from critic
//! bias, so the sweep measures the estimator family alone.
//!
//! `std` is the standard deviation of the single-trajectory estimator, not
//! of replicate means: at desk-scale trajectory counts the replicate-mean
//! deviation is so small that the RMSE curve would be bias-only and flat in
//! the variance direction. Replicates remain the unit of parallel sampling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::nchain_new;
use crate::error::{Error, Result};
use crate::estimators::{exact_advantages, per_trajectory_l_alpha};
use crate::mdp::{solve_policy_exact, value_difference_exact, TabularPolicy};
use crate::policy::TabularSoftmaxPolicy;
use crate::rng::{domain, stream_rng};
use crate::schedule::AlphaSchedule;
use crate::trajectory::sample_tabular_trajectory;

fn default_pi_right() -> f64 {
    0.5
}
fn default_grid() -> Vec<f64> {
    vec![0.7, 0.75, 0.8, 0.85, 0.9]
}
fn default_beta_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}
fn default_n_trajectories() -> usize {
    50_000
}
fn default_horizon() -> usize {
    62
}
fn default_n_replicates() -> usize {
    50
}
fn default_template() -> Vec<String> {
    vec!["beta".into(), "1".into()]
}
fn default_n_states() -> usize {
    5
}
fn default_slip() -> f64 {
    0.2
}
fn default_gamma() -> f64 {
    0.8
}

/// Sweep configuration; the defaults reproduce the chain experiment at desk
/// scale (a tenth of the published trajectory count).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_pi_right")]
    pub pi_right: f64,
    #[serde(default = "default_grid")]
    pub pi_tilde_right_grid: Vec<f64>,
    #[serde(default = "default_beta_grid")]
    pub beta_grid: Vec<f64>,
    /// Total trajectories per grid point.
    #[serde(default = "default_n_trajectories")]
    pub n_trajectories: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_n_replicates")]
    pub n_replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Suffix pattern with one free slot, e.g. `["beta", "1"]`.
    #[serde(default = "default_template")]
    pub schedule_template: Vec<String>,
    #[serde(default = "default_n_states")]
    pub n_states: usize,
    #[serde(default = "default_slip")]
    pub slip: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults are valid")
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pi_tilde_right_grid.is_empty() || self.beta_grid.is_empty() {
            return Err(Error::validation("grids must be non-empty"));
        }
        for &p in std::iter::once(&self.pi_right).chain(&self.pi_tilde_right_grid) {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::validation(format!(
                    "policy probabilities must lie strictly inside (0,1), got {p}"
                )));
            }
        }
        for &b in &self.beta_grid {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::validation(format!("beta {b} outside [0,1]")));
            }
        }
        if self.n_trajectories == 0 || self.n_replicates == 0 || self.horizon == 0 {
            return Err(Error::validation(
                "n_trajectories, n_replicates and horizon must be positive",
            ));
        }
        if self.n_trajectories % self.n_replicates != 0 {
            return Err(Error::validation(
                "n_trajectories must be divisible by n_replicates",
            ));
        }
        self.resolve_template(0.5)?;
        Ok(())
    }

    /// Instantiate the schedule template at a concrete beta.
    pub fn resolve_template(&self, beta: f64) -> Result<AlphaSchedule> {
        let mut suffix = Vec::with_capacity(self.schedule_template.len());
        for slot in &self.schedule_template {
            if slot == "beta" {
                suffix.push(beta);
            } else {
                let v: f64 = slot.parse().map_err(|_| {
                    Error::validation(format!(
                        "schedule_template entry '{slot}' is neither 'beta' nor a number"
                    ))
                })?;
                suffix.push(v);
            }
        }
        AlphaSchedule::new(suffix)
    }

    pub fn from_toml(doc: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(doc).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One grid point's results. `std` and `rmse` describe the single-trajectory
/// estimator; the `se_*` fields are standard errors of the reported
/// statistics (not part of the CSV schema).
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub pi_tilde_right: f64,
    pub beta: f64,
    pub n_traj: usize,
    pub n_replicates: usize,
    pub bias: f64,
    pub std: f64,
    pub rmse: f64,
    pub oracle_truth: f64,
    pub seed: u64,
    pub se_bias: f64,
    pub se_std: f64,
    pub se_rmse: f64,
}

/// Run the full sweep. Deterministic for a given config: every trajectory
/// draws from the stream `(seed, [SWEEP, grid_index, replicate, index])`,
/// and all reductions run in fixed order.
pub fn nchain_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mdp = nchain_new(config.n_states, config.slip, config.gamma)?;
    let behavior_table = TabularPolicy::two_action(config.n_states, config.pi_right)?;
    let behavior = TabularSoftmaxPolicy::from_probs(&behavior_table);
    let sol = solve_policy_exact(&mdp, &behavior_table)?;
    let per_replicate = config.n_trajectories / config.n_replicates;

    let mut rows = Vec::with_capacity(config.pi_tilde_right_grid.len() * config.beta_grid.len());
    for (pi_idx, &pi_tilde_right) in config.pi_tilde_right_grid.iter().enumerate() {
        let target_table = TabularPolicy::two_action(config.n_states, pi_tilde_right)?;
        let target = TabularSoftmaxPolicy::from_probs(&target_table);
        let truth = value_difference_exact(&mdp, &behavior_table, &target_table)?;
        for (beta_idx, &beta) in config.beta_grid.iter().enumerate() {
            let schedule = config.resolve_template(beta)?;
            let grid_index = (pi_idx * config.beta_grid.len() + beta_idx) as u64;

            // Replicates sample and evaluate in parallel; estimates are
            // gathered in replicate order.
            let estimates: Vec<Vec<f64>> = (0..config.n_replicates)
                .into_par_iter()
                .map(|rep| -> Result<Vec<f64>> {
                    let mut out = Vec::with_capacity(per_replicate);
                    for i in 0..per_replicate {
                        let mut rng = stream_rng(
                            config.seed,
                            &[domain::SWEEP, grid_index, rep as u64, i as u64],
                        );
                        let traj = sample_tabular_trajectory(
                            &mdp,
                            &behavior,
                            config.horizon,
                            &mut rng,
                        )?;
                        let adv = exact_advantages(&sol, &traj);
                        out.push(per_trajectory_l_alpha(
                            &traj,
                            &target,
                            &schedule,
                            &adv,
                            config.gamma,
                        )?);
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            let estimates: Vec<f64> = estimates.into_iter().flatten().collect();

            rows.push(summarize(
                &estimates,
                truth,
                pi_tilde_right,
                beta,
                config,
            ));
        }
    }
    Ok(rows)
}

fn summarize(
    estimates: &[f64],
    truth: f64,
    pi_tilde_right: f64,
    beta: f64,
    config: &SweepConfig,
) -> SweepRow {
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let bias = mean - truth;
    // Population moments keep rmse^2 = bias^2 + std^2 exact.
    let var = estimates.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let rmse = (bias * bias + var).sqrt();

    let se_bias = (var / n).sqrt() * (n / (n - 1.0)).sqrt();
    let m4 = estimates
        .iter()
        .map(|x| {
            let d = x - mean;
            d * d * d * d
        })
        .sum::<f64>()
        / n;
    let se_var = ((m4 - var * var).max(0.0) / n).sqrt();
    let se_std = if std > 0.0 { se_var / (2.0 * std) } else { 0.0 };
    let sq_dev: Vec<f64> = estimates.iter().map(|x| (x - truth) * (x - truth)).collect();
    let sq_mean = sq_dev.iter().sum::<f64>() / n;
    let se_sq = (sq_dev
        .iter()
        .map(|x| (x - sq_mean) * (x - sq_mean))
        .sum::<f64>()
        / (n * n))
        .sqrt();
    let se_rmse = if rmse > 0.0 { se_sq / (2.0 * rmse) } else { 0.0 };

    SweepRow {
        pi_tilde_right,
        beta,
        n_traj: estimates.len(),
        n_replicates: config.n_replicates,
        bias,
        std,
        rmse,
        oracle_truth: truth,
        seed: config.seed,
        se_bias,
        se_std,
        se_rmse,
    }
}

/// Fixed CSV schema:
/// `pi_tilde_right,beta,n_traj,n_replicates,bias,std,rmse,oracle_truth,seed`.
pub fn write_sweep_csv<W: Write>(out: &mut W, rows: &[SweepRow]) -> Result<()> {
    writeln!(
        out,
        "pi_tilde_right,beta,n_traj,n_replicates,bias,std,rmse,oracle_truth,seed"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.pi_tilde_right,
            r.beta,
            r.n_traj,
            r.n_replicates,
            r.bias,
            r.std,
            r.rmse,
            r.oracle_truth,
            r.seed
        )?;
    }
    Ok(())
}
