//! Environments: the NChain MDP and a toy continuous point-mass task.

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Classic NChain as a tabular MDP.
///
/// Action 0 ("forward") moves `s -> min(s+1, n-1)` with reward 0, except at
/// the final chain state where it pays 10 and stays. Action 1 ("back")
/// returns to state 0 with reward 2 from anywhere. With probability `slip`
/// the executed action is flipped. The reward table stores the expected
/// immediate reward of the chosen action, which leaves every exact policy
/// quantity unchanged. The initial state is 0.
pub fn nchain_new(n_states: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    if n_states < 2 {
        return Err(Error::validation(format!(
            "NChain needs at least 2 states, got {n_states}"
        )));
    }
    if !(0.0..=1.0).contains(&slip) || !slip.is_finite() {
        return Err(Error::validation(format!("slip must lie in [0,1], got {slip}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::validation(format!(
            "gamma must lie strictly inside (0,1), got {gamma}"
        )));
    }

    let n = n_states;
    let mut transition = vec![0.0; n * 2 * n];
    let mut reward = vec![0.0; n * 2];
    for s in 0..n {
        let forward_state = (s + 1).min(n - 1);
        let forward_reward = if s == n - 1 { 10.0 } else { 0.0 };
        // Chosen forward: executes forward w.p. 1 - slip, back w.p. slip.
        transition[(s * 2) * n + forward_state] += 1.0 - slip;
        transition[(s * 2) * n] += slip;
        reward[s * 2] = (1.0 - slip) * forward_reward + slip * 2.0;
        // Chosen back.
        transition[(s * 2 + 1) * n] += 1.0 - slip;
        transition[(s * 2 + 1) * n + forward_state] += slip;
        reward[s * 2 + 1] = (1.0 - slip) * 2.0 + slip * forward_reward;
    }
    let mut mu0 = vec![0.0; n];
    mu0[0] = 1.0;
    TabularMdp::new(n, 2, transition, reward, gamma, mu0)
}

/// 2-D point mass with velocity state and clamped acceleration actions.
///
/// State is `(x0, x1, v0, v1)`; the action is a 2-D acceleration clamped to
/// `[-1, 1]` per axis. Euler order: position integrates the old velocity,
/// then velocity integrates the action. Reward is
/// `-(||x - goal||^2 + action_cost * ||a_clamped||^2)` at the pre-step state.
/// Constants are frozen; this task backs smoke tests only.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    pub dt: f64,
    pub action_cost: f64,
    pub goal: [f64; 2],
    pub episode_len: usize,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        Self {
            dt: 0.05,
            action_cost: 0.01,
            goal: [1.0, 1.0],
            episode_len: 200,
        }
    }
}

impl PointMassEnv {
    pub const STATE_DIM: usize = 4;
    pub const ACTION_DIM: usize = 2;

    /// Deterministic start: at the origin, at rest.
    pub fn reset(&self) -> Vec<f64> {
        vec![0.0; 4]
    }

    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64)> {
        if state.len() != Self::STATE_DIM || action.len() != Self::ACTION_DIM {
            return Err(Error::validation(format!(
                "point-mass expects state dim 4 and action dim 2, got ({}, {})",
                state.len(),
                action.len()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::validation("non-finite action".to_string()));
        }
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        let (x, v) = (&state[0..2], &state[2..4]);
        let dx0 = x[0] - self.goal[0];
        let dx1 = x[1] - self.goal[1];
        let reward =
            -(dx0 * dx0 + dx1 * dx1 + self.action_cost * (a[0] * a[0] + a[1] * a[1]));
        let next = vec![
            x[0] + self.dt * v[0],
            x[1] + self.dt * v[1],
            v[0] + self.dt * a[0],
            v[1] + self.dt * a[1],
        ];
        Ok((next, reward))
    }

    /// Roll a deterministic state-feedback controller for one episode and
    /// return the undiscounted return. Used by tests and as a baseline.
    pub fn rollout_controller<F>(&self, mut controller: F) -> Result<f64>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut state = self.reset();
        let mut total = 0.0;
        for _ in 0..self.episode_len {
            let action = controller(&state);
            let (next, reward) = self.step(&state, &action)?;
            total += reward;
            state = next;
        }
        Ok(total)
    }
}
