//! Trajectories and seeded rollout collection.
//!
//! A trajectory stores, per step, the behavior policy's log-probability of
//! the sampled action; estimators form importance ratios against these stored
//! values rather than re-evaluating the behavior policy. Sampling draws from
//! counter-based streams keyed by trajectory index, so batches are
//! reproducible bit-for-bit regardless of thread count.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::policy::Policy;
use crate::rng::{domain, stream_rng};

/// One environment step under the behavior policy.
#[derive(Debug, Clone)]
pub struct Transition<S, A> {
    pub state: S,
    pub action: A,
    pub reward: f64,
    pub next_state: S,
    /// `log pi(a|s)` at sampling time.
    pub behavior_log_prob: f64,
    pub time_index: usize,
}

/// An ordered run of transitions truncated at a fixed horizon.
#[derive(Debug, Clone)]
pub struct Trajectory<S, A> {
    pub transitions: Vec<Transition<S, A>>,
    /// Horizon the rollout was truncated at.
    pub truncated_at: usize,
}

pub type TabularTrajectory = Trajectory<usize, usize>;
pub type ContinuousTrajectory = Trajectory<Vec<f64>, Vec<f64>>;

impl<S, A> Trajectory<S, A> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted reward sum.
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Discounted return from the start of the trajectory.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.transitions
            .iter()
            .rev()
            .fold(0.0, |acc, t| t.reward + gamma * acc)
    }

    /// Discounted returns-to-go `G_t` within the truncated horizon (no
    /// bootstrap beyond the final step).
    pub fn returns_to_go(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.transitions.len()];
        let mut acc = 0.0;
        for (i, t) in self.transitions.iter().enumerate().rev() {
            acc = t.reward + gamma * acc;
            out[i] = acc;
        }
        out
    }
}

impl<S: PartialEq + std::fmt::Debug, A> Trajectory<S, A> {
    /// Check the structural invariants: consecutive chaining, strictly
    /// increasing time indices from zero, finite behavior log-probs, length
    /// within the truncation horizon.
    pub fn validate(&self) -> Result<()> {
        if self.transitions.len() > self.truncated_at {
            return Err(Error::validation(format!(
                "trajectory length {} exceeds truncation horizon {}",
                self.transitions.len(),
                self.truncated_at
            )));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.time_index != i {
                return Err(Error::validation(format!(
                    "time_index {} at position {i} is not contiguous",
                    t.time_index
                )));
            }
            if !t.behavior_log_prob.is_finite() {
                return Err(Error::validation(format!(
                    "behavior_log_prob at t={i} is {}",
                    t.behavior_log_prob
                )));
            }
            if i + 1 < self.transitions.len() && self.transitions[i + 1].state != t.next_state {
                return Err(Error::validation(format!(
                    "transition chain broken between t={i} and t={}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Smallest horizon `T` with `gamma^T * r_max / (1 - gamma) <= tol`, i.e.
/// the tail of the discounted return beyond `T` is below `tol`.
pub fn truncation_horizon(gamma: f64, r_max: f64, tol: f64) -> usize {
    let tail_at = |t: usize| gamma.powi(t as i32) * r_max / (1.0 - gamma);
    let mut t = 0;
    while tail_at(t) > tol && t < 1_000_000 {
        t += 1;
    }
    t
}

fn sample_categorical<R: rand::Rng>(cdf_row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in cdf_row.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    cdf_row.len() - 1
}

/// Roll out `horizon` steps of `policy` in `mdp` with the provided stream.
/// The chain MDPs here are continuing, so every rollout has exactly
/// `horizon` transitions.
pub fn sample_tabular_trajectory<P, R>(
    mdp: &TabularMdp,
    policy: &P,
    horizon: usize,
    rng: &mut R,
) -> Result<TabularTrajectory>
where
    P: Policy<State = usize, Action = usize>,
    R: rand::Rng,
{
    if horizon == 0 {
        return Err(Error::validation("horizon must be at least 1"));
    }
    let mut state = sample_categorical(mdp.mu0(), rng);
    let mut transitions = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let (action, log_prob) = policy.sample_action(&state, rng)?;
        if action >= mdp.n_actions() {
            return Err(Error::validation(format!(
                "policy produced action {action} outside the MDP's {} actions",
                mdp.n_actions()
            )));
        }
        let reward = mdp.r(state, action);
        let next_state = sample_categorical(mdp.transition_row(state, action), rng);
        transitions.push(Transition {
            state,
            action,
            reward,
            next_state,
            behavior_log_prob: log_prob,
            time_index: t,
        });
        state = next_state;
    }
    Ok(TabularTrajectory {
        transitions,
        truncated_at: horizon,
    })
}

/// Sample a batch of trajectories in parallel. Trajectory `i` draws from the
/// stream `(master_seed, [TRAJECTORY, path.., i])`, so the batch content is
/// a pure function of the arguments.
pub fn sample_tabular_batch<P>(
    mdp: &TabularMdp,
    policy: &P,
    horizon: usize,
    n_trajectories: usize,
    master_seed: u64,
    path: &[u64],
) -> Result<Vec<TabularTrajectory>>
where
    P: Policy<State = usize, Action = usize> + Sync,
{
    (0..n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut full_path = Vec::with_capacity(path.len() + 2);
            full_path.push(domain::TRAJECTORY);
            full_path.extend_from_slice(path);
            full_path.push(i as u64);
            let mut rng = stream_rng(master_seed, &full_path);
            sample_tabular_trajectory(mdp, policy, horizon, &mut rng)
        })
        .collect()
}

/// Roll one fixed-length episode of the point-mass task.
pub fn sample_point_mass_trajectory<P, R>(
    env: &crate::envs::PointMassEnv,
    policy: &P,
    rng: &mut R,
) -> Result<ContinuousTrajectory>
where
    P: Policy<State = Vec<f64>, Action = Vec<f64>>,
    R: rand::Rng,
{
    let mut state = env.reset();
    let mut transitions = Vec::with_capacity(env.episode_len);
    for t in 0..env.episode_len {
        let (action, log_prob) = policy.sample_action(&state, rng)?;
        let (next_state, reward) = env.step(&state, &action)?;
        transitions.push(Transition {
            state: state.clone(),
            action,
            reward,
            next_state: next_state.clone(),
            behavior_log_prob: log_prob,
            time_index: t,
        });
        state = next_state;
    }
    Ok(ContinuousTrajectory {
        transitions,
        truncated_at: env.episode_len,
    })
}

/// Parallel point-mass batch with the same stream scheme as the tabular
/// sampler.
pub fn sample_point_mass_batch<P>(
    env: &crate::envs::PointMassEnv,
    policy: &P,
    n_trajectories: usize,
    master_seed: u64,
    path: &[u64],
) -> Result<Vec<ContinuousTrajectory>>
where
    P: Policy<State = Vec<f64>, Action = Vec<f64>> + Sync,
{
    (0..n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut full_path = Vec::with_capacity(path.len() + 2);
            full_path.push(domain::TRAJECTORY);
            full_path.extend_from_slice(path);
            full_path.push(i as u64);
            let mut rng = stream_rng(master_seed, &full_path);
            sample_point_mass_trajectory(env, policy, &mut rng)
        })
        .collect()
}

/// CSV export with the schema
/// `traj_id,t,state,action,reward,next_state,behavior_log_prob`.
pub fn write_trajectories_csv<W: Write>(
    out: &mut W,
    trajectories: &[TabularTrajectory],
) -> Result<()> {
    writeln!(out, "traj_id,t,state,action,reward,next_state,behavior_log_prob")?;
    for (id, traj) in trajectories.iter().enumerate() {
        for t in &traj.transitions {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                id, t.time_index, t.state, t.action, t.reward, t.next_state, t.behavior_log_prob
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::nchain_new;
    use crate::mdp::{solve_policy_exact, TabularPolicy};
    use crate::policy::TabularSoftmaxPolicy;

    #[test]
    fn deterministic_on_slip_free_chain_with_deterministic_policy() {
        let mdp = nchain_new(5, 0.0, 0.8).unwrap();
        let table = TabularPolicy::two_action(5, 1.0).unwrap();
        let always_forward = TabularSoftmaxPolicy::from_probs(&table);
        let a = sample_tabular_batch(&mdp, &always_forward, 10, 1, 1, &[0]).unwrap();
        let b = sample_tabular_batch(&mdp, &always_forward, 10, 1, 999, &[7]).unwrap();
        let states_a: Vec<usize> = a[0].transitions.iter().map(|t| t.state).collect();
        let states_b: Vec<usize> = b[0].transitions.iter().map(|t| t.state).collect();
        assert_eq!(states_a, states_b);
        assert_eq!(states_a, vec![0, 1, 2, 3, 4, 4, 4, 4, 4, 4]);
    }

    #[test]
    fn same_seed_same_bytes_across_thread_counts() {
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let policy = TabularSoftmaxPolicy::new(5, 2);
        let serial_pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide_pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = serial_pool
            .install(|| sample_tabular_batch(&mdp, &policy, 62, 100, 42, &[3]))
            .unwrap();
        let b = wide_pool
            .install(|| sample_tabular_batch(&mdp, &policy, 62, 100, 42, &[3]))
            .unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_trajectories_csv(&mut csv_a, &a).unwrap();
        write_trajectories_csv(&mut csv_b, &b).unwrap();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn trajectories_satisfy_structural_invariants() {
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let policy = TabularSoftmaxPolicy::new(5, 2);
        let batch = sample_tabular_batch(&mdp, &policy, 62, 50, 11, &[4]).unwrap();
        for traj in &batch {
            assert_eq!(traj.len(), 62);
            traj.validate().unwrap();
            for t in &traj.transitions {
                // Uniform two-action behavior: log prob is exactly log 0.5.
                assert!((t.behavior_log_prob - 0.5f64.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn discounted_visitation_matches_oracle_occupancy() {
        // gamma^t-weighted empirical state visitation, renormalized, should
        // agree with d^pi within 3 standard errors per state.
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let table = TabularPolicy::two_action(5, 0.5).unwrap();
        let policy = TabularSoftmaxPolicy::from_probs(&table);
        let sol = solve_policy_exact(&mdp, &table).unwrap();
        let n = 10_000;
        let horizon = 62;
        let batch = sample_tabular_batch(&mdp, &policy, horizon, n, 2024, &[5]).unwrap();

        let gamma = mdp.gamma();
        // Per-trajectory normalized visitation vectors.
        let norm: f64 = (0..horizon).map(|t| gamma.powi(t as i32)).sum();
        let mut mean = vec![0.0; 5];
        let mut m2 = vec![0.0; 5];
        let mut per_traj = vec![0.0; 5];
        for traj in &batch {
            per_traj.iter_mut().for_each(|x| *x = 0.0);
            for tr in &traj.transitions {
                per_traj[tr.state] += gamma.powi(tr.time_index as i32) / norm;
            }
            for s in 0..5 {
                mean[s] += per_traj[s];
                m2[s] += per_traj[s] * per_traj[s];
            }
        }
        for s in 0..5 {
            mean[s] /= n as f64;
            let var = m2[s] / n as f64 - mean[s] * mean[s];
            let se = (var / n as f64).sqrt();
            // Truncation at gamma^62 ~ 1e-6 is far below the noise floor.
            assert!(
                (mean[s] - sol.d_pi[s]).abs() <= 3.0 * se,
                "state {s}: visitation {} vs d_pi {} (se {se})",
                mean[s],
                sol.d_pi[s]
            );
        }
    }

    #[test]
    fn monte_carlo_return_matches_eta() {
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let table = TabularPolicy::two_action(5, 0.5).unwrap();
        let policy = TabularSoftmaxPolicy::from_probs(&table);
        let sol = solve_policy_exact(&mdp, &table).unwrap();
        let n = 10_000;
        let batch = sample_tabular_batch(&mdp, &policy, 62, n, 31, &[6]).unwrap();
        let returns: Vec<f64> = batch.iter().map(|t| t.discounted_return(0.8)).collect();
        let mean: f64 = returns.iter().sum::<f64>() / n as f64;
        let var: f64 =
            returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - sol.eta).abs() <= 3.0 * se,
            "MC return {mean} vs eta {} (se {se})",
            sol.eta
        );
    }

    #[test]
    fn truncation_horizon_threshold() {
        // gamma = 0.8, r_max = 10: tail 50 * 0.8^T <= 1e-4 first at T = 59.
        let t = truncation_horizon(0.8, 10.0, 1e-4);
        assert_eq!(t, 59);
        assert!(0.8f64.powi(t as i32) * 10.0 / 0.2 <= 1e-4);
        assert!(0.8f64.powi(t as i32 - 1) * 10.0 / 0.2 > 1e-4);
    }

    #[test]
    fn returns_to_go_are_suffix_sums() {
        let traj = TabularTrajectory {
            transitions: (0..3)
                .map(|t| Transition {
                    state: 0,
                    action: 0,
                    reward: (t + 1) as f64,
                    next_state: 0,
                    behavior_log_prob: 0.0,
                    time_index: t,
                })
                .collect(),
            truncated_at: 3,
        };
        let g = traj.returns_to_go(0.5);
        assert!((g[2] - 3.0).abs() < 1e-15);
        assert!((g[1] - (2.0 + 0.5 * 3.0)).abs() < 1e-15);
        assert!((g[0] - (1.0 + 0.5 * g[1])).abs() < 1e-15);
        assert_eq!(traj.discounted_return(0.5), g[0]);
    }
}
