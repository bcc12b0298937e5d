//! The smoothed importance-sampling objective family and its bound
//! evaluators.
//!
//! The per-timestep weight `rho_hat_t = prod_i rho_i^{alpha_t^i}` interpolates
//! between the last-step surrogate ratio (suffix `(1)`) and the full ratio
//! product (all-ones suffix). Ratio products accumulate in log space with a
//! single final exponentiation. The product range includes `i = 0`.
//!
//! Bound evaluators never assume their constants: callers measure
//! `C_rho`, `epsilon`, `C_partial`, `C_delta`, `C_gamma` from the oracle or
//! by direct maximization and pass them in.

use crate::error::{Error, Result};
use crate::mdp::{ExactSolution, TabularPolicy};
use crate::policy::Policy;
use crate::schedule::AlphaSchedule;
use crate::trajectory::Trajectory;

/// Per-timestep advantage estimates aligned with one trajectory, along with
/// the value baseline they were computed against.
#[derive(Debug, Clone)]
pub struct AdvantageEstimate {
    pub values: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl AdvantageEstimate {
    pub fn validate_for<S, A>(&self, trajectory: &Trajectory<S, A>) -> Result<()> {
        if self.values.len() != trajectory.len() {
            return Err(Error::validation(format!(
                "advantage length {} does not match trajectory length {}",
                self.values.len(),
                trajectory.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite advantage value"));
        }
        Ok(())
    }
}

/// Advantages read off an exact solution: `A(s_t, a_t)` with baseline `V(s_t)`.
pub fn exact_advantages(
    solution: &ExactSolution,
    trajectory: &Trajectory<usize, usize>,
) -> AdvantageEstimate {
    let values = trajectory
        .transitions
        .iter()
        .map(|t| solution.adv_at(t.state, t.action))
        .collect();
    let baseline = trajectory
        .transitions
        .iter()
        .map(|t| solution.v[t.state])
        .collect();
    AdvantageEstimate { values, baseline }
}

/// Log importance ratios `log pi_tilde(a_i|s_i) - behavior_log_prob_i` for
/// every step of a trajectory.
pub fn log_ratio_series<P>(trajectory: &Trajectory<P::State, P::Action>, policy_tilde: &P) -> Result<Vec<f64>>
where
    P: Policy,
{
    trajectory
        .transitions
        .iter()
        .map(|t| Ok(policy_tilde.log_prob(&t.state, &t.action)? - t.behavior_log_prob))
        .collect()
}

fn log_smoothed_product(log_ratios: &[f64], schedule: &AlphaSchedule, t: usize) -> f64 {
    let mut acc = 0.0;
    for i in schedule.window_start(t)..=t {
        let w = schedule.weight(t, i);
        if w != 0.0 {
            acc += w * log_ratios[i];
        }
    }
    acc
}

/// `rho_hat_t = exp(sum_{i=0}^{t} alpha_t^i (log pi_tilde(a_i|s_i) - blp_i))`,
/// the weighted power mean of the ratio history toward 1.
pub fn smoothed_ratio_product<P>(
    trajectory: &Trajectory<P::State, P::Action>,
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    t: usize,
) -> Result<f64>
where
    P: Policy,
{
    if t >= trajectory.len() {
        return Err(Error::validation(format!(
            "timestep {t} out of range for trajectory of length {}",
            trajectory.len()
        )));
    }
    let mut acc = 0.0;
    for i in schedule.window_start(t)..=t {
        let w = schedule.weight(t, i);
        if w == 0.0 {
            continue;
        }
        let tr = &trajectory.transitions[i];
        let log_ratio = policy_tilde.log_prob(&tr.state, &tr.action)? - tr.behavior_log_prob;
        acc += w * log_ratio;
    }
    let rho = acc.exp();
    if !rho.is_finite() {
        return Err(Error::numeric(format!(
            "smoothed ratio product overflowed at t={t} (log value {acc})"
        )));
    }
    Ok(rho)
}

/// One trajectory's contribution `sum_t gamma^t rho_hat_t A_t`.
pub fn per_trajectory_l_alpha<P>(
    trajectory: &Trajectory<P::State, P::Action>,
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &AdvantageEstimate,
    gamma: f64,
) -> Result<f64>
where
    P: Policy,
{
    advantages.validate_for(trajectory)?;
    let log_ratios = log_ratio_series(trajectory, policy_tilde)?;
    let mut acc = 0.0;
    let mut disc = 1.0;
    for t in 0..trajectory.len() {
        let rho = log_smoothed_product(&log_ratios, schedule, t).exp();
        if !rho.is_finite() {
            return Err(Error::numeric(format!(
                "smoothed ratio product overflowed at t={t}"
            )));
        }
        acc += disc * rho * advantages.values[t];
        disc *= gamma;
    }
    Ok(acc)
}

/// Batch-mean estimate of the smoothed objective:
/// `mean_j sum_t gamma^t rho_hat_t A_t`.
pub fn l_alpha_estimate<P>(
    trajectories: &[Trajectory<P::State, P::Action>],
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &[AdvantageEstimate],
    gamma: f64,
) -> Result<f64>
where
    P: Policy,
{
    if trajectories.is_empty() {
        return Err(Error::validation("empty trajectory set"));
    }
    if trajectories.len() != advantages.len() {
        return Err(Error::validation(format!(
            "{} trajectories but {} advantage sets",
            trajectories.len(),
            advantages.len()
        )));
    }
    let mut acc = 0.0;
    for (traj, adv) in trajectories.iter().zip(advantages) {
        acc += per_trajectory_l_alpha(traj, policy_tilde, schedule, adv, gamma)?;
    }
    Ok(acc / trajectories.len() as f64)
}

/// The step-based importance-sampling estimator: the all-ones row of the
/// objective family, kept as a named operation. Delegates to
/// `l_alpha_estimate` with an all-ones suffix covering the longest
/// trajectory, so the two agree bit-for-bit.
pub fn is_estimate<P>(
    trajectories: &[Trajectory<P::State, P::Action>],
    policy_tilde: &P,
    advantages: &[AdvantageEstimate],
    gamma: f64,
) -> Result<f64>
where
    P: Policy,
{
    let max_len = trajectories.iter().map(|t| t.len()).max().unwrap_or(0);
    let schedule = AlphaSchedule::all_ones(max_len);
    l_alpha_estimate(trajectories, policy_tilde, &schedule, advantages, gamma)
}

/// The clipped pessimistic term
/// `min(clamp(rho_hat, 1-omega, 1+omega) * A_t, rho_hat * A_t)`.
pub fn clipped_objective_term<P>(
    trajectory: &Trajectory<P::State, P::Action>,
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    advantages: &AdvantageEstimate,
    t: usize,
    omega: f64,
) -> Result<f64>
where
    P: Policy,
{
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::validation(format!("omega must lie in (0,1), got {omega}")));
    }
    advantages.validate_for(trajectory)?;
    let rho = smoothed_ratio_product(trajectory, policy_tilde, schedule, t)?;
    let adv = advantages.values[t];
    Ok((rho.clamp(1.0 - omega, 1.0 + omega) * adv).min(rho * adv))
}

/// Generalized advantage estimation over a truncated trajectory.
///
/// `delta_t = r_t + gamma V(s_{t+1}) - V(s_t)` with the value at the
/// truncation boundary bootstrapped from `value_fn`, accumulated backward as
/// `A_t = delta_t + gamma lambda A_{t+1}`.
pub fn gae<S, A, V>(
    trajectory: &Trajectory<S, A>,
    value_fn: V,
    gamma: f64,
    lambda: f64,
) -> Result<AdvantageEstimate>
where
    V: Fn(&S) -> f64,
{
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::validation(format!("lambda must lie in [0,1], got {lambda}")));
    }
    let n = trajectory.len();
    let mut values = vec![0.0; n];
    let mut baseline = vec![0.0; n];
    let mut carried = 0.0;
    let mut next_value = match trajectory.transitions.last() {
        Some(last) => value_fn(&last.next_state),
        None => return Err(Error::validation("empty trajectory")),
    };
    for t in (0..n).rev() {
        let tr = &trajectory.transitions[t];
        let v_t = value_fn(&tr.state);
        let delta = tr.reward + gamma * next_value - v_t;
        carried = delta + gamma * lambda * carried;
        if !carried.is_finite() {
            return Err(Error::numeric(format!("non-finite advantage at t={t}")));
        }
        values[t] = carried;
        baseline[t] = v_t;
        next_value = v_t;
    }
    Ok(AdvantageEstimate { values, baseline })
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() < 2 {
            return Self { mean, se: 0.0 };
        }
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

/// Closed-form variance bound for the truncated estimator:
/// `(1 - gamma^T) / (1 - gamma) * epsilon^2 * sum_{t<T} gamma^t C_rho^{2 ||alpha_t||_1}`
/// where `horizon` counts the T timesteps of the truncated trajectory.
pub fn variance_bound_lemma1(
    schedule: &AlphaSchedule,
    c_rho: f64,
    epsilon: f64,
    gamma: f64,
    horizon: usize,
) -> Result<f64> {
    if !(c_rho >= 1.0) {
        return Err(Error::validation(format!("c_rho must be >= 1, got {c_rho}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::validation(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::validation(format!("gamma must lie in (0,1), got {gamma}")));
    }
    let mut sum = 0.0;
    let mut disc = 1.0;
    for t in 0..horizon {
        sum += disc * c_rho.powf(2.0 * schedule.l1_norm_at(t));
        disc *= gamma;
    }
    let prefix = (1.0 - gamma.powi(horizon as i32)) / (1.0 - gamma);
    Ok(prefix * epsilon * epsilon * sum)
}

/// Both published forms of the absolute-bias bound, evaluated by Monte Carlo
/// over trajectories drawn from the target policy.
///
/// The statement form uses exponents `1 - alpha_t^i` (and so vanishes for the
/// all-ones schedule, consistent with importance-sampling unbiasedness); the
/// proof's final displayed line uses the smoothed product itself. The two
/// genuinely differ and are reported side by side; checks assert the
/// statement form.
#[derive(Debug, Clone, Copy)]
pub struct Lemma2Bound {
    pub statement: McEstimate,
    pub proof_final: McEstimate,
}

pub fn bias_bound_lemma2<P>(
    trajectories_from_pi_tilde: &[Trajectory<P::State, P::Action>],
    policy_tilde: &P,
    policy: &P,
    schedule: &AlphaSchedule,
    epsilon: f64,
    gamma: f64,
) -> Result<Lemma2Bound>
where
    P: Policy,
{
    if trajectories_from_pi_tilde.is_empty() {
        return Err(Error::validation("empty trajectory set"));
    }
    let mut statement_samples = Vec::with_capacity(trajectories_from_pi_tilde.len());
    let mut proof_samples = Vec::with_capacity(trajectories_from_pi_tilde.len());
    for traj in trajectories_from_pi_tilde {
        // Evaluate both policies explicitly: these trajectories come from
        // pi_tilde, so the stored behavior log-prob belongs to pi_tilde.
        let mut log_ratios = Vec::with_capacity(traj.len());
        for tr in &traj.transitions {
            let lp = policy.log_prob(&tr.state, &tr.action)?;
            if lp == f64::NEG_INFINITY {
                return Err(Error::Support(
                    "behavior policy has zero probability on a target-policy trajectory".into(),
                ));
            }
            log_ratios.push(policy_tilde.log_prob(&tr.state, &tr.action)? - lp);
        }
        let mut prefix = 0.0;
        let mut stmt = 0.0;
        let mut proof = 0.0;
        let mut disc = 1.0;
        for t in 0..traj.len() {
            prefix += log_ratios[t];
            let weighted = log_smoothed_product(&log_ratios, schedule, t);
            // sum_i (1 - alpha_t^i) log rho_i = prefix_t - weighted_t
            stmt += disc * ((prefix - weighted).exp() - 1.0).abs();
            proof += disc * (weighted.exp() - 1.0).abs();
            disc *= gamma;
        }
        statement_samples.push(epsilon * stmt);
        proof_samples.push(epsilon * proof);
    }
    Ok(Lemma2Bound {
        statement: McEstimate::from_samples(&statement_samples),
        proof_final: McEstimate::from_samples(&proof_samples),
    })
}

/// Closed-form gradient-variance bound with the proof's explicit constant:
/// `epsilon^2 C_partial^2 C_delta^2 C_gamma * sum_{t<T} gamma^t ||alpha_t||_1^2`.
pub fn grad_variance_bound_lemma3(
    c_partial: f64,
    c_delta: f64,
    c_gamma: f64,
    epsilon: f64,
    gamma: f64,
    schedule: &AlphaSchedule,
    horizon: usize,
) -> Result<f64> {
    for (name, v) in [
        ("c_partial", c_partial),
        ("c_delta", c_delta),
        ("c_gamma", c_gamma),
        ("epsilon", epsilon),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::validation(format!("{name} must be a nonnegative real, got {v}")));
        }
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::validation(format!("gamma must lie in (0,1), got {gamma}")));
    }
    let mut sum = 0.0;
    let mut disc = 1.0;
    for t in 0..horizon {
        let l1 = schedule.l1_norm_at(t);
        sum += disc * l1 * l1;
        disc *= gamma;
    }
    Ok(epsilon * epsilon * c_partial * c_partial * c_delta * c_delta * c_gamma * sum)
}

/// Monte Carlo evaluation of the gradient-bias bound over behavior-policy
/// trajectories:
/// `epsilon C_partial E sum_t gamma^t [rho_hat_t ||alpha_t - 1||_1 + (t+1) |rho_hat_t - rho_{0:t}|]`.
pub fn grad_bias_bound_lemma4<P>(
    trajectories_from_pi: &[Trajectory<P::State, P::Action>],
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    epsilon: f64,
    c_partial: f64,
    gamma: f64,
) -> Result<McEstimate>
where
    P: Policy,
{
    if trajectories_from_pi.is_empty() {
        return Err(Error::validation("empty trajectory set"));
    }
    let mut samples = Vec::with_capacity(trajectories_from_pi.len());
    for traj in trajectories_from_pi {
        let log_ratios = log_ratio_series(traj, policy_tilde)?;
        let mut prefix = 0.0;
        let mut acc = 0.0;
        let mut disc = 1.0;
        for t in 0..traj.len() {
            prefix += log_ratios[t];
            let rho_hat = log_smoothed_product(&log_ratios, schedule, t).exp();
            let rho_full = prefix.exp();
            if !rho_hat.is_finite() || !rho_full.is_finite() {
                return Err(Error::numeric(format!("ratio product overflowed at t={t}")));
            }
            acc += disc
                * (rho_hat * schedule.l1_distance_from_ones_at(t)
                    + (t + 1) as f64 * (rho_hat - rho_full).abs());
            disc *= gamma;
        }
        samples.push(epsilon * c_partial * acc);
    }
    Ok(McEstimate::from_samples(&samples))
}

// ---------------------------------------------------------------------------
// Measured bound constants
// ---------------------------------------------------------------------------

/// `max_{s,a} numerator(a|s) / denominator(a|s)` over the finite state-action
/// space; support violation if the denominator vanishes where the numerator
/// does not.
pub fn max_policy_ratio(numerator: &TabularPolicy, denominator: &TabularPolicy) -> Result<f64> {
    if numerator.n_states() != denominator.n_states()
        || numerator.n_actions() != denominator.n_actions()
    {
        return Err(Error::validation("policy shapes differ"));
    }
    let mut best = 0.0f64;
    for s in 0..numerator.n_states() {
        for a in 0..numerator.n_actions() {
            let num = numerator.prob(s, a);
            let den = denominator.prob(s, a);
            if den == 0.0 {
                if num == 0.0 {
                    continue;
                }
                return Err(Error::Support(format!(
                    "denominator policy has zero probability at (s={s}, a={a})"
                )));
            }
            best = best.max(num / den);
        }
    }
    Ok(best)
}

/// `max_{s,a} ||grad_theta pi(a|s)||_2` for a tabular softmax policy, by
/// direct maximization: row `s` carries `pi(a|s) (1{a=b} - pi(b|s))`.
pub fn max_grad_policy_norm(policy: &crate::policy::TabularSoftmaxPolicy) -> f64 {
    let mut best = 0.0f64;
    for s in 0..policy.n_states() {
        let probs = policy.probs_row(s);
        for a in 0..policy.n_actions() {
            let mut norm2 = 0.0;
            for b in 0..policy.n_actions() {
                let indicator = if a == b { 1.0 } else { 0.0 };
                let g = probs[a] * (indicator - probs[b]);
                norm2 += g * g;
            }
            best = best.max(norm2.sqrt());
        }
    }
    best
}

/// Monte Carlo measurement of `E_pi sum_t gamma^t rho_hat_t^2`, the
/// second-moment constant of the gradient-variance bound.
pub fn measure_c_gamma<P>(
    trajectories_from_pi: &[Trajectory<P::State, P::Action>],
    policy_tilde: &P,
    schedule: &AlphaSchedule,
    gamma: f64,
) -> Result<McEstimate>
where
    P: Policy,
{
    if trajectories_from_pi.is_empty() {
        return Err(Error::validation("empty trajectory set"));
    }
    let mut samples = Vec::with_capacity(trajectories_from_pi.len());
    for traj in trajectories_from_pi {
        let log_ratios = log_ratio_series(traj, policy_tilde)?;
        let mut acc = 0.0;
        let mut disc = 1.0;
        for t in 0..traj.len() {
            let rho = log_smoothed_product(&log_ratios, schedule, t).exp();
            acc += disc * rho * rho;
            disc *= gamma;
        }
        samples.push(acc);
    }
    Ok(McEstimate::from_samples(&samples))
}
