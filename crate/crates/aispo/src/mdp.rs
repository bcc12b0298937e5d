//! Tabular MDP representation and the exact-solution oracle.
//!
//! Everything here is computed by dense linear solves and exact finite sums:
//! no sampling, no iteration-to-tolerance (value iteration exists only as an
//! independent cross-check). These quantities serve as ground truth for every
//! statistical test in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_dense;

const PROB_TOL: f64 = 1e-12;

/// A finite MDP: transition tensor `p[s][a][s']`, reward table `r[s][a]`,
/// discount factor, and initial state distribution.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Flattened row-major `p[s][a][s']`, length `S * A * S`.
    transition: Vec<f64>,
    /// Flattened `r[s][a]`, length `S * A`.
    reward: Vec<f64>,
    gamma: f64,
    mu0: Vec<f64>,
}

/// Serialized form; field names are the on-disk TOML schema.
#[derive(Serialize, Deserialize)]
struct RawMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    mu0: Vec<f64>,
    transition: Vec<f64>,
    reward: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        mu0: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::validation("n_states and n_actions must be positive"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::validation(format!(
                "gamma must lie strictly inside (0,1), got {gamma}"
            )));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::validation(format!(
                "transition length {} != S*A*S = {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::validation(format!(
                "reward length {} != S*A = {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if mu0.len() != n_states {
            return Err(Error::validation(format!(
                "mu0 length {} != n_states {}",
                mu0.len(),
                n_states
            )));
        }
        for (i, &p) in transition.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::validation(format!(
                    "transition[{i}] = {p} is not a probability"
                )));
            }
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let base = (s * n_actions + a) * n_states;
                let row_sum: f64 = transition[base..base + n_states].iter().sum();
                if (row_sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::validation(format!(
                        "transition row (s={s}, a={a}) sums to {row_sum}, expected 1"
                    )));
                }
            }
        }
        for (i, &p) in mu0.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::validation(format!("mu0[{i}] = {p} is not a probability")));
            }
        }
        let mu_sum: f64 = mu0.iter().sum();
        if (mu_sum - 1.0).abs() > PROB_TOL {
            return Err(Error::validation(format!("mu0 sums to {mu_sum}, expected 1")));
        }
        for (i, &r) in reward.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::validation(format!("reward[{i}] = {r} is not finite")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            mu0,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    /// Transition probability `p(s' | s, a)`.
    #[inline]
    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// Reward `r(s, a)`.
    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Next-state distribution row for `(s, a)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// Largest absolute reward; the `R_max` of variance/bias bounds.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn to_toml(&self) -> String {
        let raw = RawMdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            mu0: self.mu0.clone(),
            transition: self.transition.clone(),
            reward: self.reward.clone(),
        };
        toml::to_string(&raw).expect("MDP serialization cannot fail")
    }

    pub fn from_toml(doc: &str) -> Result<Self> {
        let raw: RawMdp = toml::from_str(doc).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(
            raw.n_states,
            raw.n_actions,
            raw.transition,
            raw.reward,
            raw.gamma,
            raw.mu0,
        )
    }
}

/// A row-stochastic action distribution table, the policy representation the
/// oracle consumes. Softmax policies convert into this via `to_table`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    /// Flattened `pi[s][a]`.
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::validation(format!(
                "policy table length {} != S*A = {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::validation(format!(
                    "policy prob[{i}] = {p} is not a probability"
                )));
            }
        }
        for s in 0..n_states {
            let row_sum: f64 = probs[s * n_actions..(s + 1) * n_actions].iter().sum();
            if (row_sum - 1.0).abs() > PROB_TOL {
                return Err(Error::validation(format!(
                    "policy row {s} sums to {row_sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    /// Two-action policy assigning probability `p_first` to action 0 in every
    /// state. This is the Bernoulli chain policy of the NChain experiments.
    pub fn two_action(n_states: usize, p_first: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_first) {
            return Err(Error::validation(format!(
                "action probability must lie in [0,1], got {p_first}"
            )));
        }
        let mut probs = Vec::with_capacity(n_states * 2);
        for _ in 0..n_states {
            probs.push(p_first);
            probs.push(1.0 - p_first);
        }
        Self::new(n_states, 2, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::validation(format!(
                "policy shape ({}, {}) does not match MDP shape ({}, {})",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Exact policy-evaluation outputs: `V`, `Q`, `A`, the normalized discounted
/// occupancy `d`, and the policy value `eta`.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub v: Vec<f64>,
    /// Flattened `q[s][a]`.
    pub q: Vec<f64>,
    /// Flattened `adv[s][a] = q[s][a] - v[s]`.
    pub adv: Vec<f64>,
    /// Normalized discounted state occupancy, sums to 1.
    pub d_pi: Vec<f64>,
    pub eta: f64,
    n_actions: usize,
}

impl ExactSolution {
    #[inline]
    pub fn q_at(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    #[inline]
    pub fn adv_at(&self, s: usize, a: usize) -> f64 {
        self.adv[s * self.n_actions + a]
    }

    /// Largest absolute advantage; the `epsilon` of the variance/bias bounds.
    pub fn max_abs_advantage(&self) -> f64 {
        self.adv.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Policy-averaged transition matrix `P_pi(s, s')`, row-major.
fn policy_transition_matrix(mdp: &TabularMdp, policy: &TabularPolicy) -> Vec<f64> {
    let n = mdp.n_states();
    let mut p_pi = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            let row = mdp.transition_row(s, a);
            for s_next in 0..n {
                p_pi[s * n + s_next] += w * row[s_next];
            }
        }
    }
    p_pi
}

/// Exact policy evaluation by dense linear solves.
///
/// `V` solves `(I - gamma * P_pi) V = r_pi`; `Q`, `A` follow pointwise;
/// `d_pi = (1 - gamma) (I - gamma * P_pi^T)^{-1} mu0`, renormalized to guard
/// round-off; `eta = mu0 . V`.
pub fn solve_policy_exact(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<ExactSolution> {
    policy.check_compatible(mdp)?;
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let gamma = mdp.gamma();
    let p_pi = policy_transition_matrix(mdp, policy);

    let mut system = vec![0.0; n * n];
    for s in 0..n {
        for s_next in 0..n {
            let id = if s == s_next { 1.0 } else { 0.0 };
            system[s * n + s_next] = id - gamma * p_pi[s * n + s_next];
        }
    }
    let r_pi: Vec<f64> = (0..n)
        .map(|s| (0..na).map(|a| policy.prob(s, a) * mdp.r(s, a)).sum())
        .collect();
    let v = solve_dense(&system, &r_pi, n)?;

    let mut q = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            let row = mdp.transition_row(s, a);
            let future: f64 = row.iter().zip(&v).map(|(p, vs)| p * vs).sum();
            q[s * na + a] = mdp.r(s, a) + gamma * future;
        }
    }
    let adv: Vec<f64> = (0..n * na).map(|i| q[i] - v[i / na]).collect();

    // Occupancy: transpose the resolvent and apply it to mu0.
    let mut system_t = vec![0.0; n * n];
    for s in 0..n {
        for s_next in 0..n {
            let id = if s == s_next { 1.0 } else { 0.0 };
            system_t[s * n + s_next] = id - gamma * p_pi[s_next * n + s];
        }
    }
    let resolvent_mu = solve_dense(&system_t, mdp.mu0(), n)?;
    let mut d_pi: Vec<f64> = resolvent_mu.iter().map(|x| (1.0 - gamma) * x).collect();
    let total: f64 = d_pi.iter().sum();
    for x in &mut d_pi {
        *x /= total;
    }

    let eta = mdp.mu0().iter().zip(&v).map(|(m, vs)| m * vs).sum();

    Ok(ExactSolution {
        v,
        q,
        adv,
        d_pi,
        eta,
        n_actions: na,
    })
}

/// Fixed-point policy evaluation, kept independent of the linear-solve path
/// so the two can cross-check each other.
pub fn value_iteration(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    policy.check_compatible(mdp)?;
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let gamma = mdp.gamma();
    let mut v = vec![0.0; n];
    for _ in 0..max_iter {
        let mut v_next = vec![0.0; n];
        for s in 0..n {
            let mut acc = 0.0;
            for a in 0..na {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                let row = mdp.transition_row(s, a);
                let future: f64 = row.iter().zip(&v).map(|(p, vs)| p * vs).sum();
                acc += w * (mdp.r(s, a) + gamma * future);
            }
            v_next[s] = acc;
        }
        let delta = v
            .iter()
            .zip(&v_next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = v_next;
        if delta < tol {
            return Ok(v);
        }
    }
    Err(Error::numeric(format!(
        "value iteration did not reach tol {tol} within {max_iter} sweeps"
    )))
}

/// `eta(pi_tilde) - eta(pi)` via two exact solves.
pub fn value_difference_exact(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    pi_tilde: &TabularPolicy,
) -> Result<f64> {
    let a = solve_policy_exact(mdp, pi)?;
    let b = solve_policy_exact(mdp, pi_tilde)?;
    Ok(b.eta - a.eta)
}

/// The same difference computed from the advantage form
/// `1/(1-gamma) * E_{s ~ d^{pi_tilde}, a ~ pi_tilde} A^pi(s, a)`,
/// used to cross-validate `value_difference_exact`.
pub fn value_difference_via_advantage(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    pi_tilde: &TabularPolicy,
) -> Result<f64> {
    let sol_pi = solve_policy_exact(mdp, pi)?;
    let sol_tilde = solve_policy_exact(mdp, pi_tilde)?;
    let mut acc = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            acc += sol_tilde.d_pi[s] * pi_tilde.prob(s, a) * sol_pi.adv_at(s, a);
        }
    }
    Ok(acc / (1.0 - mdp.gamma()))
}

/// The surrogate `L_pi(pi_tilde) = 1/(1-gamma) E_{s ~ d^pi, a ~ pi_tilde} A^pi(s,a)`
/// as an exact finite sum.
pub fn surrogate_exact(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    pi_tilde: &TabularPolicy,
) -> Result<f64> {
    let sol_pi = solve_policy_exact(mdp, pi)?;
    surrogate_from_solution(mdp, &sol_pi, pi_tilde)
}

/// Surrogate computed from an already-solved behavior policy.
pub fn surrogate_from_solution(
    mdp: &TabularMdp,
    sol_pi: &ExactSolution,
    pi_tilde: &TabularPolicy,
) -> Result<f64> {
    pi_tilde.check_compatible(mdp)?;
    let mut acc = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            acc += sol_pi.d_pi[s] * pi_tilde.prob(s, a) * sol_pi.adv_at(s, a);
        }
    }
    Ok(acc / (1.0 - mdp.gamma()))
}

/// Residual of the exact decomposition of the value difference into the
/// surrogate plus the occupancy-correction term:
///
/// `eta(pi_tilde) - eta(pi) = L_pi(pi_tilde)
///   + 1/(1-gamma) E_{s ~ d^pi} sum_a (pi_tilde - pi)(a|s) (Q^pi_tilde - Q^pi)(s,a)`.
///
/// All terms come from exact solves; the residual is zero up to round-off.
pub fn check_performance_difference_identity(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    pi_tilde: &TabularPolicy,
) -> Result<f64> {
    let sol_pi = solve_policy_exact(mdp, pi)?;
    let sol_tilde = solve_policy_exact(mdp, pi_tilde)?;
    let direct = sol_tilde.eta - sol_pi.eta;
    let surrogate = surrogate_from_solution(mdp, &sol_pi, pi_tilde)?;
    let mut correction = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let dpi = pi_tilde.prob(s, a) - pi.prob(s, a);
            let dq = sol_tilde.q_at(s, a) - sol_pi.q_at(s, a);
            correction += sol_pi.d_pi[s] * dpi * dq;
        }
    }
    correction /= 1.0 - mdp.gamma();
    Ok((direct - surrogate - correction).abs())
}

/// Residual of the value-dependency equality
/// `eta(pi_tilde) - eta(pi) = 1/(1-gamma) E_{s ~ d^pi} sum_a (pi_tilde - pi)(a|s) Q^pi_tilde(s,a)`.
pub fn check_value_dependency_equality(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    pi_tilde: &TabularPolicy,
) -> Result<f64> {
    let sol_pi = solve_policy_exact(mdp, pi)?;
    let sol_tilde = solve_policy_exact(mdp, pi_tilde)?;
    let direct = sol_tilde.eta - sol_pi.eta;
    let mut rhs = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            rhs += sol_pi.d_pi[s] * (pi_tilde.prob(s, a) - pi.prob(s, a)) * sol_tilde.q_at(s, a);
        }
    }
    rhs /= 1.0 - mdp.gamma();
    Ok((direct - rhs).abs())
}

/// Correction term of the performance-difference decomposition on its own,
/// used by the fault-injection self-test of the check suite.
pub(crate) fn occupancy_correction_term(
    mdp: &TabularMdp,
    sol_pi: &ExactSolution,
    sol_tilde: &ExactSolution,
    pi: &TabularPolicy,
    pi_tilde: &TabularPolicy,
    d_scale: f64,
) -> f64 {
    let mut correction = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let dpi = pi_tilde.prob(s, a) - pi.prob(s, a);
            let dq = sol_tilde.q_at(s, a) - sol_pi.q_at(s, a);
            correction += d_scale * sol_pi.d_pi[s] * dpi * dq;
        }
    }
    correction / (1.0 - mdp.gamma())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::nchain_new;
    use rand::Rng;

    fn single_state_mdp(reward: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![reward], gamma, vec![1.0]).unwrap()
    }

    /// Seeded random MDP + policy pair used by the identity sweeps.
    pub(crate) fn random_mdp_and_policies(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        seed: u64,
    ) -> (TabularMdp, TabularPolicy, TabularPolicy) {
        let mut rng = crate::rng::stream_rng(seed, &[crate::rng::domain::CHECK, 99]);
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let mut row: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
            // Renormalize exactly: subtract drift from the largest entry.
            let drift: f64 = row.iter().sum::<f64>() - 1.0;
            let imax = (0..n_states).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            row[imax] -= drift;
            transition.extend(row);
        }
        let reward: Vec<f64> = (0..n_states * n_actions)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let mut mu0: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
        let msum: f64 = mu0.iter().sum();
        mu0.iter_mut().for_each(|x| *x /= msum);
        let drift: f64 = mu0.iter().sum::<f64>() - 1.0;
        mu0[0] -= drift;
        let mdp = TabularMdp::new(n_states, n_actions, transition, reward, gamma, mu0).unwrap();

        let mut mk_policy = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut probs = Vec::with_capacity(n_states * n_actions);
            for _ in 0..n_states {
                let mut row: Vec<f64> = (0..n_actions).map(|_| rng.random::<f64>() + 0.05).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= sum);
                let drift: f64 = row.iter().sum::<f64>() - 1.0;
                row[0] -= drift;
                probs.extend(row);
            }
            TabularPolicy::new(n_states, n_actions, probs).unwrap()
        };
        let pi = mk_policy(&mut rng);
        let pi_tilde = mk_policy(&mut rng);
        (mdp, pi, pi_tilde)
    }

    #[test]
    fn single_state_geometric_series() {
        let mdp = single_state_mdp(1.0, 0.8);
        let pol = TabularPolicy::uniform(1, 1);
        let sol = solve_policy_exact(&mdp, &pol).unwrap();
        assert!((sol.v[0] - 5.0).abs() < 1e-12);
        assert!((sol.eta - 5.0).abs() < 1e-12);
        assert!((sol.d_pi[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_reward_mdp_is_identically_zero() {
        let (mdp, pi, _) = random_mdp_and_policies(4, 3, 0.9, 5);
        let zeroed = TabularMdp::new(
            4,
            3,
            (0..4 * 3)
                .flat_map(|i| {
                    (0..4)
                        .map(move |j| mdp.p(i / 3, i % 3, j))
                        .collect::<Vec<_>>()
                })
                .collect(),
            vec![0.0; 12],
            0.9,
            mdp.mu0().to_vec(),
        )
        .unwrap();
        let sol = solve_policy_exact(&zeroed, &pi).unwrap();
        assert!(sol.v.iter().all(|&x| x.abs() < 1e-12));
        assert!(sol.q.iter().all(|&x| x.abs() < 1e-12));
        assert!(sol.adv.iter().all(|&x| x.abs() < 1e-12));
        assert!(sol.eta.abs() < 1e-12);
    }

    #[test]
    fn nchain_value_pinned_and_cross_checked() {
        // Frozen regression constants for NChain(5, slip 0.2, gamma 0.8) with
        // pi(forward) = 0.5, obtained from an exact rational elimination:
        // V = (141, 149, 169, 219, 344) / 25.
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let pol = TabularPolicy::two_action(5, 0.5).unwrap();
        let sol = solve_policy_exact(&mdp, &pol).unwrap();
        let expected = [141.0 / 25.0, 149.0 / 25.0, 169.0 / 25.0, 219.0 / 25.0, 344.0 / 25.0];
        for (v, e) in sol.v.iter().zip(expected) {
            assert!((v - e).abs() < 1e-10, "V mismatch: {v} vs {e}");
        }
        assert!((sol.eta - 5.64).abs() < 1e-10);

        let vi = value_iteration(&mdp, &pol, 1e-13, 400).unwrap();
        for (a, b) in vi.iter().zip(&sol.v) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_solution_invariants_hold() {
        for seed in 0..20 {
            let (mdp, pi, _) = random_mdp_and_policies(4, 3, 0.9, seed);
            let sol = solve_policy_exact(&mdp, &pi).unwrap();
            // adv = q - v by construction.
            for s in 0..4 {
                for a in 0..3 {
                    assert_eq!(sol.adv_at(s, a), sol.q_at(s, a) - sol.v[s]);
                }
            }
            // E_{a ~ pi} A(s, a) = 0 exactly up to round-off.
            for s in 0..4 {
                let mean_adv: f64 = (0..3).map(|a| pi.prob(s, a) * sol.adv_at(s, a)).sum();
                assert!(mean_adv.abs() < 1e-10);
            }
            let d_sum: f64 = sol.d_pi.iter().sum();
            assert!((d_sum - 1.0).abs() < 1e-10);
            // eta = 1/(1-gamma) sum_s d(s) sum_a pi(a|s) r(s,a).
            let mut eta_occ = 0.0;
            for s in 0..4 {
                for a in 0..3 {
                    eta_occ += sol.d_pi[s] * pi.prob(s, a) * mdp.r(s, a);
                }
            }
            eta_occ /= 1.0 - mdp.gamma();
            assert!((eta_occ - sol.eta).abs() < 1e-10);
        }
    }

    #[test]
    fn value_difference_trivial_cases() {
        let (mdp, pi, _) = random_mdp_and_policies(4, 3, 0.9, 11);
        assert_eq!(value_difference_exact(&mdp, &pi, &pi).unwrap(), 0.0);

        // Single-state, 2-action, r = (0, 1), gamma = 0.5: switching from the
        // uniform policy to always taking action 1 gains (1 - 0.5) / (1 - 0.5) = 1.
        let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 1.0], 0.5, vec![1.0]).unwrap();
        let pi = TabularPolicy::uniform(1, 2);
        let pi_tilde = TabularPolicy::new(1, 2, vec![0.0, 1.0]).unwrap();
        let diff = value_difference_exact(&mdp, &pi, &pi_tilde).unwrap();
        assert!((diff - 1.0).abs() < 1e-12);
    }

    #[test]
    fn value_difference_two_routes_agree_and_negate_under_swap() {
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let pi = TabularPolicy::two_action(5, 0.5).unwrap();
        let pi_tilde = TabularPolicy::two_action(5, 0.9).unwrap();
        let direct = value_difference_exact(&mdp, &pi, &pi_tilde).unwrap();
        let via_adv = value_difference_via_advantage(&mdp, &pi, &pi_tilde).unwrap();
        assert!((direct - via_adv).abs() < 1e-9);
        let swapped = value_difference_exact(&mdp, &pi_tilde, &pi).unwrap();
        assert_eq!(direct, -swapped);

        for seed in 0..100 {
            let (mdp, pi, pi_tilde) = random_mdp_and_policies(4, 3, 0.9, seed);
            let direct = value_difference_exact(&mdp, &pi, &pi_tilde).unwrap();
            let via_adv = value_difference_via_advantage(&mdp, &pi, &pi_tilde).unwrap();
            assert!(
                (direct - via_adv).abs() < 1e-9,
                "seed {seed}: {direct} vs {via_adv}"
            );
        }
    }

    #[test]
    fn performance_difference_identity_residuals() {
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let pi = TabularPolicy::two_action(5, 0.5).unwrap();
        assert_eq!(check_performance_difference_identity(&mdp, &pi, &pi).unwrap(), 0.0);
        let pi_tilde = TabularPolicy::two_action(5, 0.7).unwrap();
        assert!(check_performance_difference_identity(&mdp, &pi, &pi_tilde).unwrap() <= 1e-9);

        for seed in 0..100 {
            let (mdp, pi, pi_tilde) = random_mdp_and_policies(4, 3, 0.9, seed);
            let res = check_performance_difference_identity(&mdp, &pi, &pi_tilde).unwrap();
            assert!(res <= 1e-9, "seed {seed}: residual {res}");
        }
    }

    #[test]
    fn value_dependency_equality_residuals() {
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let pi = TabularPolicy::two_action(5, 0.5).unwrap();
        assert_eq!(check_value_dependency_equality(&mdp, &pi, &pi).unwrap(), 0.0);
        let pi_tilde = TabularPolicy::two_action(5, 0.85).unwrap();
        assert!(check_value_dependency_equality(&mdp, &pi, &pi_tilde).unwrap() <= 1e-9);

        for seed in 0..100 {
            let (mdp, pi, pi_tilde) = random_mdp_and_policies(4, 3, 0.9, seed);
            let res = check_value_dependency_equality(&mdp, &pi, &pi_tilde).unwrap();
            assert!(res <= 1e-9, "seed {seed}: residual {res}");
        }
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let doc = mdp.to_toml();
        let back = TabularMdp::from_toml(&doc).unwrap();
        assert_eq!(back.n_states(), 5);
        for s in 0..5 {
            for a in 0..2 {
                assert_eq!(back.r(s, a), mdp.r(s, a));
                for t in 0..5 {
                    assert_eq!(back.p(s, a, t), mdp.p(s, a, t));
                }
            }
        }

        let bad = doc.replace("gamma = 0.8", "gamma = 1.0");
        assert!(matches!(TabularMdp::from_toml(&bad), Err(Error::Validation(_))));
        assert!(matches!(TabularMdp::from_toml("not toml ["), Err(Error::Parse(_))));
    }

    #[test]
    fn malformed_policy_is_rejected() {
        let mdp = nchain_new(5, 0.2, 0.8).unwrap();
        let wrong_shape = TabularPolicy::uniform(4, 2);
        assert!(solve_policy_exact(&mdp, &wrong_shape).is_err());
        assert!(TabularPolicy::new(2, 2, vec![0.7, 0.2, 0.5, 0.5]).is_err());
        assert!(TabularPolicy::new(2, 2, vec![-0.1, 1.1, 0.5, 0.5]).is_err());
    }
}
