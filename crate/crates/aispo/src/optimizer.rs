//! Minibatch policy optimization on the clipped smoothed objective.
//!
//! The outer loop samples a batch with the behavior policy, fits a value
//! baseline, estimates advantages with GAE, then performs a fixed number of
//! minibatch Adam steps on the clipped objective before the target policy
//! becomes the next behavior policy. Every stochastic choice draws from a
//! stream keyed by (seed, iteration, ...), so runs are reproducible
//! byte-for-byte.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::envs::PointMassEnv;
use crate::error::{Error, Result};
use crate::estimators::{gae, AdvantageEstimate};
use crate::mdp::{solve_policy_exact, TabularMdp};
use crate::policy::{GaussianMlpPolicy, Mlp, Policy, TabularSoftmaxPolicy};
use crate::rng::{domain, stream_rng};
use crate::schedule::AlphaSchedule;
use crate::trajectory::{
    sample_point_mass_batch, sample_tabular_batch, ContinuousTrajectory, TabularTrajectory,
    Trajectory,
};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;

/// Epoch budget and step size of the MLP value fit.
const VALUE_FIT_EPOCHS: usize = 25;
const VALUE_FIT_LR: f64 = 1e-2;

/// Decay applied to the learning rate and clip range over training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    LinearToZero,
    Constant,
}

impl DecayMode {
    fn factor(&self, fraction_elapsed: f64) -> f64 {
        match self {
            DecayMode::LinearToZero => (1.0 - fraction_elapsed).max(0.0),
            DecayMode::Constant => 1.0,
        }
    }
}

/// Training-loop configuration. The defaults are the published setup:
/// learning rate `3e-4`, Adam epsilon `1e-5`, batches of 2048 transitions,
/// 320 minibatch steps of size 64 per batch, clip range 0.2, discount 0.99,
/// GAE lambda 0.95, both decays linear-to-zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub minibatch_size: usize,
    pub updates_per_batch: usize,
    pub batch_transitions: usize,
    pub clip_omega: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub schedule: AlphaSchedule,
    pub lr_decay: DecayMode,
    pub clip_decay: DecayMode,
    /// Weight minibatch terms by `gamma^t` (the objective's definition) or
    /// uniformly (the convention of common clipped-surrogate codebases).
    pub discount_weighting: bool,
    pub total_timesteps: usize,
    pub seed: u64,
    /// Rollout truncation horizon for tabular environments.
    pub horizon: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            adam_epsilon: 1e-5,
            minibatch_size: 64,
            updates_per_batch: 320,
            batch_transitions: 2048,
            clip_omega: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            schedule: AlphaSchedule::last_step(),
            lr_decay: DecayMode::LinearToZero,
            clip_decay: DecayMode::LinearToZero,
            discount_weighting: true,
            total_timesteps: 102_400,
            seed: 0,
            horizon: 62,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::validation("adam_epsilon must be positive"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::validation("minibatch_size must be positive"));
        }
        if self.batch_transitions == 0 {
            return Err(Error::validation("batch_transitions must be positive"));
        }
        if !(self.clip_omega > 0.0 && self.clip_omega < 1.0) {
            return Err(Error::validation("clip_omega must lie in (0,1)"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::validation("gamma must lie strictly inside (0,1)"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::validation("gae_lambda must lie in [0,1]"));
        }
        if self.total_timesteps < self.batch_transitions {
            return Err(Error::validation(
                "total_timesteps must cover at least one batch",
            ));
        }
        if self.horizon == 0 {
            return Err(Error::validation("horizon must be positive"));
        }
        Ok(())
    }

    pub fn from_toml(doc: &str) -> Result<Self> {
        let cfg: OptimConfig = toml::from_str(doc).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn iterations(&self) -> usize {
        (self.total_timesteps / self.batch_transitions).max(1)
    }
}

// ---------------------------------------------------------------------------
// Objective gradients
// ---------------------------------------------------------------------------

/// Analytic gradient of the unclipped smoothed term at timestep `t`:
/// `rho_hat_t * sum_i alpha_t^i grad_log pi_tilde(a_i|s_i) * A_t`.
pub fn grad_f_alpha<P>(
    trajectory: &Trajectory<P::State, P::Action>,
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &AdvantageEstimate,
    t: usize,
) -> Result<Vec<f64>>
where
    P: Policy,
{
    let mut grad = vec![0.0; policy_tilde.n_params()];
    accumulate_term_gradient(
        &mut grad,
        trajectory,
        policy_tilde,
        schedule,
        advantages,
        t,
        None,
        1.0,
    )?;
    Ok(grad)
}

/// Gradient of the clipped term `min(clamp(rho_hat) A, rho_hat A)`:
/// zero when the clamped branch is active and saturated, the unclipped
/// gradient otherwise (ties resolve to the unclipped branch).
pub fn grad_f_alpha_clipped<P>(
    trajectory: &Trajectory<P::State, P::Action>,
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &AdvantageEstimate,
    t: usize,
    omega: f64,
) -> Result<(Vec<f64>, bool)>
where
    P: Policy,
{
    let mut grad = vec![0.0; policy_tilde.n_params()];
    let stats = accumulate_term_gradient(
        &mut grad,
        trajectory,
        policy_tilde,
        schedule,
        advantages,
        t,
        Some(omega),
        1.0,
    )?;
    Ok((grad, stats.clipped))
}

struct TermStats {
    rho_hat: f64,
    clipped: bool,
}

/// Accumulate `scale * grad f^alpha_{phi^omega}(t)` into `grad`.
#[allow(clippy::too_many_arguments)]
fn accumulate_term_gradient<P>(
    grad: &mut [f64],
    trajectory: &Trajectory<P::State, P::Action>,
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &AdvantageEstimate,
    t: usize,
    omega: Option<f64>,
    scale: f64,
) -> Result<TermStats>
where
    P: Policy,
{
    if t >= trajectory.len() {
        return Err(Error::validation(format!(
            "timestep {t} out of range for trajectory of length {}",
            trajectory.len()
        )));
    }
    advantages.validate_for(trajectory)?;
    let adv = advantages.values[t];

    let lo = schedule.window_start(t);
    let mut log_rho = 0.0;
    for i in lo..=t {
        let w = schedule.weight(t, i);
        if w == 0.0 {
            continue;
        }
        let tr = &trajectory.transitions[i];
        log_rho += w * (policy_tilde.log_prob(&tr.state, &tr.action)? - tr.behavior_log_prob);
    }
    let rho_hat = log_rho.exp();
    if !rho_hat.is_finite() {
        return Err(Error::numeric(format!(
            "smoothed ratio product overflowed at t={t} (log value {log_rho})"
        )));
    }

    // The clamp zeroes the gradient exactly when the pessimistic min selects
    // the saturated clamped branch.
    let clipped = match omega {
        Some(w) => (adv > 0.0 && rho_hat > 1.0 + w) || (adv < 0.0 && rho_hat < 1.0 - w),
        None => false,
    };
    if !clipped {
        let coeff = scale * rho_hat * adv;
        for i in lo..=t {
            let w = schedule.weight(t, i);
            if w == 0.0 {
                continue;
            }
            let tr = &trajectory.transitions[i];
            let glp = policy_tilde.grad_log_prob(&tr.state, &tr.action)?;
            for (g, d) in grad.iter_mut().zip(&glp) {
                *g += coeff * w * d;
            }
        }
    }
    Ok(TermStats { rho_hat, clipped })
}

/// One trajectory's full objective gradient `sum_t gamma^t grad f^alpha(t)`,
/// unclipped. This is the per-sample gradient whose covariance the
/// gradient-variance bound controls.
pub fn per_trajectory_objective_gradient<P>(
    trajectory: &Trajectory<P::State, P::Action>,
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &AdvantageEstimate,
    gamma: f64,
) -> Result<Vec<f64>>
where
    P: Policy,
{
    let mut grad = vec![0.0; policy_tilde.n_params()];
    let mut disc = 1.0;
    for t in 0..trajectory.len() {
        accumulate_term_gradient(
            &mut grad,
            trajectory,
            policy_tilde,
            schedule,
            advantages,
            t,
            None,
            disc,
        )?;
        disc *= gamma;
    }
    Ok(grad)
}

/// A sampled timestep within a collected batch of trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimestepRef {
    pub traj: usize,
    pub t: usize,
}

/// Diagnostics from one minibatch gradient evaluation.
#[derive(Debug, Clone, Copy)]
pub struct MinibatchStats {
    pub clip_fraction: f64,
    pub max_rho: f64,
}

/// Minibatch gradient `|B|^{-1} sum_{t in B} w_t grad f^alpha_{phi^omega}`
/// with `w_t = gamma^t` when discount weighting is on and 1 otherwise.
#[allow(clippy::too_many_arguments)]
pub fn grad_objective_minibatch<P>(
    batch: &[TimestepRef],
    trajectories: &[Trajectory<P::State, P::Action>],
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &[AdvantageEstimate],
    omega: f64,
    discount_weighting: bool,
    gamma: f64,
) -> Result<(Vec<f64>, MinibatchStats)>
where
    P: Policy,
{
    if batch.is_empty() {
        return Err(Error::validation("empty minibatch"));
    }
    let mut grad = vec![0.0; policy_tilde.n_params()];
    let mut clipped_count = 0usize;
    let mut max_rho = f64::NEG_INFINITY;
    for r in batch {
        let traj = trajectories.get(r.traj).ok_or_else(|| {
            Error::validation(format!("minibatch references missing trajectory {}", r.traj))
        })?;
        if r.t >= traj.len() {
            return Err(Error::validation(format!(
                "minibatch references missing history (traj {}, t {})",
                r.traj, r.t
            )));
        }
        let w_t = if discount_weighting {
            gamma.powi(r.t as i32)
        } else {
            1.0
        };
        let stats = accumulate_term_gradient(
            &mut grad,
            traj,
            policy_tilde,
            schedule,
            &advantages[r.traj],
            r.t,
            Some(omega),
            w_t,
        )?;
        if stats.clipped {
            clipped_count += 1;
        }
        max_rho = max_rho.max(stats.rho_hat);
    }
    let inv = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((
        grad,
        MinibatchStats {
            clip_fraction: clipped_count as f64 / batch.len() as f64,
            max_rho,
        },
    ))
}

/// The scalar minibatch objective whose gradient `grad_objective_minibatch`
/// computes: `|B|^{-1} sum_{t in B} w_t min(clamp(rho_hat) A, rho_hat A)`.
#[allow(clippy::too_many_arguments)]
pub fn minibatch_objective<P>(
    batch: &[TimestepRef],
    trajectories: &[Trajectory<P::State, P::Action>],
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &[AdvantageEstimate],
    omega: f64,
    discount_weighting: bool,
    gamma: f64,
) -> Result<f64>
where
    P: Policy,
{
    if batch.is_empty() {
        return Err(Error::validation("empty minibatch"));
    }
    let mut acc = 0.0;
    for r in batch {
        let traj = &trajectories[r.traj];
        let w_t = if discount_weighting {
            gamma.powi(r.t as i32)
        } else {
            1.0
        };
        acc += w_t
            * crate::estimators::clipped_objective_term(
                traj,
                policy_tilde,
                schedule,
                &advantages[r.traj],
                r.t,
                omega,
            )?;
    }
    Ok(acc / batch.len() as f64)
}

/// Batch mean of the clipped objective, one term per timestep weighted by
/// `gamma^t`, averaged over trajectories. Reported in learning curves.
pub fn clipped_objective_batch_mean<P>(
    trajectories: &[Trajectory<P::State, P::Action>],
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &[AdvantageEstimate],
    omega: f64,
    gamma: f64,
) -> Result<f64>
where
    P: Policy,
{
    let mut acc = 0.0;
    for (traj, adv) in trajectories.iter().zip(advantages) {
        let mut disc = 1.0;
        for t in 0..traj.len() {
            acc += disc
                * crate::estimators::clipped_objective_term(traj, policy_tilde, schedule, adv, t, omega)?;
            disc *= gamma;
        }
    }
    Ok(acc / trajectories.len() as f64)
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// First/second-moment accumulators with a step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam step in the ascent direction of `grad`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grad: &[f64],
    lr: f64,
    epsilon: f64,
) -> Result<()> {
    if params.len() != state.m.len() || grad.len() != state.m.len() {
        return Err(Error::validation(format!(
            "shape mismatch: params {}, grad {}, state {}",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as f64;
    let bias1 = 1.0 - ADAM_BETA1.powf(t);
    let bias2 = 1.0 - ADAM_BETA2.powf(t);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grad[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] += lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Value-function fitting
// ---------------------------------------------------------------------------

/// Tabular value fit: the per-state mean of empirical discounted
/// returns-to-go, which is the exact least-squares minimizer. States never
/// visited fall back to zero with a logged warning.
pub fn fit_tabular_value(
    trajectories: &[TabularTrajectory],
    n_states: usize,
    gamma: f64,
) -> Vec<f64> {
    let mut sum = vec![0.0; n_states];
    let mut count = vec![0usize; n_states];
    for traj in trajectories {
        let returns = traj.returns_to_go(gamma);
        for (tr, g) in traj.transitions.iter().zip(returns) {
            sum[tr.state] += g;
            count[tr.state] += 1;
        }
    }
    (0..n_states)
        .map(|s| {
            if count[s] == 0 {
                log::warn!("state {s} never visited during value fit; using 0");
                0.0
            } else {
                sum[s] / count[s] as f64
            }
        })
        .collect()
}

/// MLP value function over continuous states.
#[derive(Debug, Clone)]
pub struct ValueMlp {
    pub net: Mlp,
}

impl ValueMlp {
    pub fn predict(&self, state: &[f64]) -> f64 {
        self.net.forward(state).0[0]
    }
}

pub struct MlpValueFit {
    pub value: ValueMlp,
    /// Mean squared error before each epoch's update pass, plus a final
    /// post-training entry.
    pub epoch_losses: Vec<f64>,
}

/// Fit the MLP value function by full-batch Adam on the squared error
/// against empirical returns-to-go, for a fixed epoch budget.
pub fn fit_mlp_value(
    trajectories: &[ContinuousTrajectory],
    gamma: f64,
    hidden: usize,
    seed: u64,
    iteration: usize,
) -> Result<MlpValueFit> {
    if trajectories.is_empty() {
        return Err(Error::validation("empty trajectory set"));
    }
    let state_dim = trajectories[0].transitions[0].state.len();
    let mut rng = stream_rng(seed, &[domain::VALUE_FIT, iteration as u64]);
    let mut net = Mlp::new(state_dim, hidden, 1, &mut rng);

    let mut inputs: Vec<&[f64]> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for traj in trajectories {
        let returns = traj.returns_to_go(gamma);
        for (tr, g) in traj.transitions.iter().zip(returns) {
            inputs.push(&tr.state);
            targets.push(g);
        }
    }
    let n = inputs.len() as f64;

    let mut adam = AdamState::new(net.n_params());
    let mut params = net.params();
    let mut epoch_losses = Vec::with_capacity(VALUE_FIT_EPOCHS + 1);
    for _ in 0..VALUE_FIT_EPOCHS {
        let mut grad = vec![0.0; net.n_params()];
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(&targets) {
            let (out, tape) = net.forward(x);
            let err = out[0] - y;
            loss += err * err;
            // d/dparams of (pred - y)^2 / n.
            net.backward_into(&tape, &[2.0 * err / n], &mut grad, 0);
        }
        epoch_losses.push(loss / n);
        // Descend the squared error (ascent on its negation).
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        adam_step(&mut adam, &mut params, &neg, VALUE_FIT_LR, 1e-8)?;
        net.set_params(&params)?;
    }
    let final_loss: f64 = inputs
        .iter()
        .zip(&targets)
        .map(|(x, &y)| {
            let p = net.forward(x).0[0];
            (p - y) * (p - y)
        })
        .sum::<f64>()
        / n;
    epoch_losses.push(final_loss);
    Ok(MlpValueFit {
        value: ValueMlp { net },
        epoch_losses,
    })
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// One learning-curve row.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub timesteps: usize,
    /// Exact policy value at batch-collection time; tabular environments only.
    pub eta_oracle: Option<f64>,
    pub mean_return_mc: f64,
    pub objective: f64,
    pub clip_fraction: f64,
    pub max_ratio: f64,
    pub seed: u64,
}

pub struct TrainResult<P> {
    pub records: Vec<IterationRecord>,
    pub policy: P,
}

/// `learning curve CSV schema: iteration,timesteps,eta_oracle,...` with an
/// empty `eta_oracle` field for continuous environments.
pub fn write_records_csv<W: Write>(out: &mut W, records: &[IterationRecord]) -> Result<()> {
    writeln!(
        out,
        "iteration,timesteps,eta_oracle,mean_return_mc,objective,clip_fraction,max_ratio,seed"
    )?;
    for r in records {
        let eta = r.eta_oracle.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.timesteps,
            eta,
            r.mean_return_mc,
            r.objective,
            r.clip_fraction,
            r.max_ratio,
            r.seed
        )?;
    }
    Ok(())
}

/// Deterministic Fisher-Yates permutation of `0..n`.
fn shuffled_indices(n: usize, seed: u64, path: &[u64]) -> Vec<usize> {
    use rand::Rng;
    let mut rng = stream_rng(seed, path);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

struct UpdateOutcome {
    clip_fraction: f64,
    max_ratio: f64,
}

/// The inner update phase: `updates_per_batch` minibatch Adam steps over the
/// collected batch, with epoch-wise reshuffling.
#[allow(clippy::too_many_arguments)]
fn run_policy_updates<P>(
    policy: &mut P,
    trajectories: &[Trajectory<P::State, P::Action>],
    advantages: &[AdvantageEstimate],
    config: &OptimConfig,
    adam: &mut AdamState,
    iteration: usize,
    fraction_elapsed: f64,
) -> Result<UpdateOutcome>
where
    P: Policy,
{
    let mut all_refs = Vec::new();
    for (j, traj) in trajectories.iter().enumerate() {
        for t in 0..traj.len() {
            all_refs.push(TimestepRef { traj: j, t });
        }
    }
    let n = all_refs.len();
    let lr = config.learning_rate * config.lr_decay.factor(fraction_elapsed);
    let omega = config.clip_omega * config.clip_decay.factor(fraction_elapsed);
    let per_epoch = n.div_ceil(config.minibatch_size).max(1);

    let mut clip_sum = 0.0;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut params = policy.params();
    for update in 0..config.updates_per_batch {
        let epoch = update / per_epoch;
        let slot = update % per_epoch;
        if slot == 0 {
            let perm = shuffled_indices(
                config.seed,
                config.seed,
                &[domain::SHUFFLE, iteration as u64, epoch as u64],
            );
            // Reorder in place: refs follow this epoch's permutation.
            let reordered: Vec<TimestepRef> = perm.iter().map(|&i| all_refs[i]).collect();
            all_refs = reordered;
        }
        let lo = slot * config.minibatch_size;
        let hi = (lo + config.minibatch_size).min(n);
        let batch = &all_refs[lo..hi];
        let (grad, stats) = grad_objective_minibatch(
            batch,
            trajectories,
            policy,
            &config.schedule,
            advantages,
            omega,
            config.discount_weighting,
            config.gamma,
        )?;
        adam_step(adam, &mut params, &grad, lr, config.adam_epsilon)?;
        if params.iter().any(|p| !p.is_finite()) {
            let bad = params.iter().position(|p| !p.is_finite()).unwrap();
            return Err(Error::numeric(format!(
                "parameter {bad} became non-finite at iteration {iteration}, update {update} \
                 (lr {lr}, omega {omega})"
            )));
        }
        policy.set_params(&params)?;
        clip_sum += stats.clip_fraction;
        max_ratio = max_ratio.max(stats.max_rho);
    }
    Ok(UpdateOutcome {
        clip_fraction: if config.updates_per_batch > 0 {
            clip_sum / config.updates_per_batch as f64
        } else {
            0.0
        },
        max_ratio: if max_ratio.is_finite() { max_ratio } else { 0.0 },
    })
}

/// Run the training loop on a tabular MDP with a softmax policy. Learning
/// curves carry the exact oracle value of the behavior policy per iteration.
pub fn train_tabular(
    mdp: &TabularMdp,
    initial_policy: TabularSoftmaxPolicy,
    config: &OptimConfig,
) -> Result<TrainResult<TabularSoftmaxPolicy>> {
    config.validate()?;
    if initial_policy.n_states() != mdp.n_states()
        || initial_policy.n_actions() != mdp.n_actions()
    {
        return Err(Error::validation("policy shape does not match the MDP"));
    }
    let mut policy = initial_policy;
    let mut adam = AdamState::new(policy.n_params());
    let iterations = config.iterations();
    let n_traj = config.batch_transitions.div_ceil(config.horizon);
    let mut records = Vec::with_capacity(iterations);
    let mut timesteps = 0usize;

    for iteration in 0..iterations {
        let batch = sample_tabular_batch(
            mdp,
            &policy,
            config.horizon,
            n_traj,
            config.seed,
            &[iteration as u64],
        )?;
        timesteps += batch.iter().map(|t| t.len()).sum::<usize>();

        let eta = solve_policy_exact(mdp, &policy.to_table())?.eta;
        let mean_return =
            batch.iter().map(|t| t.total_reward()).sum::<f64>() / batch.len() as f64;

        let value = fit_tabular_value(&batch, mdp.n_states(), config.gamma);
        let advantages: Vec<AdvantageEstimate> = batch
            .iter()
            .map(|t| gae(t, |s: &usize| value[*s], config.gamma, config.gae_lambda))
            .collect::<Result<_>>()?;

        let fraction_elapsed = (iteration * config.batch_transitions) as f64
            / config.total_timesteps as f64;
        let outcome = run_policy_updates(
            &mut policy,
            &batch,
            &advantages,
            config,
            &mut adam,
            iteration,
            fraction_elapsed,
        )?;
        let omega = config.clip_omega * config.clip_decay.factor(fraction_elapsed);
        let objective = clipped_objective_batch_mean(
            &batch,
            &policy,
            &config.schedule,
            &advantages,
            omega,
            config.gamma,
        )?;
        records.push(IterationRecord {
            iteration,
            timesteps,
            eta_oracle: Some(eta),
            mean_return_mc: mean_return,
            objective,
            clip_fraction: outcome.clip_fraction,
            max_ratio: outcome.max_ratio,
            seed: config.seed,
        });
    }
    Ok(TrainResult { records, policy })
}

/// Run the training loop on the point-mass task with a Gaussian policy.
/// Rollouts use the environment's fixed episode length.
pub fn train_point_mass(
    env: &PointMassEnv,
    initial_policy: GaussianMlpPolicy,
    config: &OptimConfig,
) -> Result<TrainResult<GaussianMlpPolicy>> {
    config.validate()?;
    let mut policy = initial_policy;
    let mut adam = AdamState::new(policy.n_params());
    let iterations = config.iterations();
    let n_traj = config.batch_transitions.div_ceil(env.episode_len).max(1);
    let mut records = Vec::with_capacity(iterations);
    let mut timesteps = 0usize;

    for iteration in 0..iterations {
        let batch =
            sample_point_mass_batch(env, &policy, n_traj, config.seed, &[iteration as u64])?;
        timesteps += batch.iter().map(|t| t.len()).sum::<usize>();
        let mean_return =
            batch.iter().map(|t| t.total_reward()).sum::<f64>() / batch.len() as f64;

        let fit = fit_mlp_value(&batch, config.gamma, 32, config.seed, iteration)?;
        let advantages: Vec<AdvantageEstimate> = batch
            .iter()
            .map(|t| {
                gae(
                    t,
                    |s: &Vec<f64>| fit.value.predict(s),
                    config.gamma,
                    config.gae_lambda,
                )
            })
            .collect::<Result<_>>()?;

        let fraction_elapsed = (iteration * config.batch_transitions) as f64
            / config.total_timesteps as f64;
        let outcome = run_policy_updates(
            &mut policy,
            &batch,
            &advantages,
            config,
            &mut adam,
            iteration,
            fraction_elapsed,
        )?;
        let omega = config.clip_omega * config.clip_decay.factor(fraction_elapsed);
        let objective = clipped_objective_batch_mean(
            &batch,
            &policy,
            &config.schedule,
            &advantages,
            omega,
            config.gamma,
        )?;
        records.push(IterationRecord {
            iteration,
            timesteps,
            eta_oracle: None,
            mean_return_mc: mean_return,
            objective,
            clip_fraction: outcome.clip_fraction,
            max_ratio: outcome.max_ratio,
            seed: config.seed,
        });
    }
    Ok(TrainResult { records, policy })
}
