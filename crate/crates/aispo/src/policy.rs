//! Policy parameterizations with exact log-probabilities and analytic
//! parameter gradients.
//!
//! Two classes are provided: a tabular softmax over logits (used for the
//! chain experiments and every oracle-backed check) and a diagonal-Gaussian
//! policy whose mean comes from a fixed two-hidden-layer tanh network.
//! Gradients are accumulated manually in reverse mode for the fixed
//! architecture, so everything stays checkable against finite differences.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularPolicy;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_74;

/// A stochastic policy with differentiable log-density over a flat parameter
/// vector. `sample_action` returns the action together with its log-density
/// at sampling time, which trajectories store as the behavior log-prob.
pub trait Policy {
    type State;
    type Action;

    fn log_prob(&self, state: &Self::State, action: &Self::Action) -> Result<f64>;

    fn sample_action<R: Rng>(&self, state: &Self::State, rng: &mut R)
        -> Result<(Self::Action, f64)>;

    /// Gradient of `log_prob` with respect to the flat parameter vector.
    fn grad_log_prob(&self, state: &Self::State, action: &Self::Action) -> Result<Vec<f64>>;

    fn n_params(&self) -> usize;

    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;
}

/// Importance ratio `pi_tilde(a|s) / pi(a|s)` evaluated through exact
/// log-densities. Fails with a support violation when the behavior policy
/// assigns zero probability to the pair.
pub fn ratio<P: Policy>(
    policy_tilde: &P,
    policy: &P,
    state: &P::State,
    action: &P::Action,
) -> Result<f64> {
    let lp = policy.log_prob(state, action)?;
    if lp == f64::NEG_INFINITY {
        return Err(Error::Support(
            "behavior policy has zero probability at the queried state-action".into(),
        ));
    }
    let lpt = policy_tilde.log_prob(state, action)?;
    Ok((lpt - lp).exp())
}

// ---------------------------------------------------------------------------
// Tabular softmax
// ---------------------------------------------------------------------------

/// Softmax policy over a logit table `theta[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    /// Flattened `theta[s][a]`.
    logits: Vec<f64>,
}

impl TabularSoftmaxPolicy {
    /// Uniform policy: all logits zero.
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != n_states * n_actions {
            return Err(Error::validation(format!(
                "logit table length {} != S*A = {}",
                logits.len(),
                n_states * n_actions
            )));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("logits must be finite"));
        }
        Ok(Self {
            n_states,
            n_actions,
            logits,
        })
    }

    /// Policy with the given probability table; zero probabilities map to
    /// `-inf` logits and stay on the boundary.
    pub fn from_probs(table: &TabularPolicy) -> Self {
        let n_states = table.n_states();
        let n_actions = table.n_actions();
        let logits = (0..n_states * n_actions)
            .map(|i| table.prob(i / n_actions, i % n_actions).ln())
            .collect();
        Self {
            n_states,
            n_actions,
            logits,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn check_indices(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::validation(format!(
                "state/action ({s}, {a}) out of range for ({}, {}) policy",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    fn logit_row(&self, s: usize) -> &[f64] {
        &self.logits[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Log-softmax of row `s` with max-subtraction for overflow safety.
    fn log_probs_row(&self, s: usize) -> Vec<f64> {
        let row = self.logit_row(s);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let log_norm = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        row.iter().map(|&x| x - max - log_norm).collect()
    }

    /// Action probabilities at state `s`.
    pub fn probs_row(&self, s: usize) -> Vec<f64> {
        self.log_probs_row(s).iter().map(|&lp| lp.exp()).collect()
    }

    /// Exact probability table for the oracle.
    pub fn to_table(&self) -> TabularPolicy {
        let mut probs = Vec::with_capacity(self.n_states * self.n_actions);
        for s in 0..self.n_states {
            let row = self.probs_row(s);
            // Squash residual round-off so the table passes strict validation.
            let sum: f64 = row.iter().sum();
            probs.extend(row.iter().map(|p| p / sum));
        }
        TabularPolicy::new(self.n_states, self.n_actions, probs)
            .expect("softmax rows are normalized by construction")
    }
}

impl Policy for TabularSoftmaxPolicy {
    type State = usize;
    type Action = usize;

    fn log_prob(&self, state: &usize, action: &usize) -> Result<f64> {
        self.check_indices(*state, *action)?;
        Ok(self.log_probs_row(*state)[*action])
    }

    fn sample_action<R: Rng>(&self, state: &usize, rng: &mut R) -> Result<(usize, f64)> {
        self.check_indices(*state, 0)?;
        let log_probs = self.log_probs_row(*state);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut chosen = self.n_actions - 1;
        for (a, lp) in log_probs.iter().enumerate() {
            cum += lp.exp();
            if u < cum {
                chosen = a;
                break;
            }
        }
        Ok((chosen, log_probs[chosen]))
    }

    fn grad_log_prob(&self, state: &usize, action: &usize) -> Result<Vec<f64>> {
        self.check_indices(*state, *action)?;
        let mut grad = vec![0.0; self.logits.len()];
        let probs = self.probs_row(*state);
        for b in 0..self.n_actions {
            let indicator = if b == *action { 1.0 } else { 0.0 };
            grad[*state * self.n_actions + b] = indicator - probs[b];
        }
        Ok(grad)
    }

    fn n_params(&self) -> usize {
        self.logits.len()
    }

    fn params(&self) -> Vec<f64> {
        self.logits.clone()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.logits.len() {
            return Err(Error::validation(format!(
                "parameter length {} != {}",
                params.len(),
                self.logits.len()
            )));
        }
        self.logits.copy_from_slice(params);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Two-hidden-layer tanh MLP
// ---------------------------------------------------------------------------

/// Fixed two-hidden-layer tanh network. Shared by the Gaussian policy mean
/// and the value function, with hand-written reverse-mode accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    /// `w1[h][i]`, row-major `hidden x in_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `w2[h2][h1]`, `hidden x hidden`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// `w3[o][h]`, `out_dim x hidden`.
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by `backward`.
pub struct MlpTape {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut layer = |rows: usize, cols: usize, rng: &mut R| -> Vec<f64> {
            let scale = (6.0 / (rows + cols) as f64).sqrt();
            (0..rows * cols)
                .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
                .collect()
        };
        Self {
            in_dim,
            hidden,
            out_dim,
            w1: layer(hidden, in_dim, rng),
            b1: vec![0.0; hidden],
            w2: layer(hidden, hidden, rng),
            b2: vec![0.0; hidden],
            w3: layer(out_dim, hidden, rng),
            b3: vec![0.0; out_dim],
        }
    }

    pub fn n_params(&self) -> usize {
        self.hidden * self.in_dim
            + self.hidden
            + self.hidden * self.hidden
            + self.hidden
            + self.out_dim * self.hidden
            + self.out_dim
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpTape) {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut h1 = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let mut acc = self.b1[h];
            for i in 0..self.in_dim {
                acc += self.w1[h * self.in_dim + i] * x[i];
            }
            h1[h] = acc.tanh();
        }
        let mut h2 = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let mut acc = self.b2[h];
            for j in 0..self.hidden {
                acc += self.w2[h * self.hidden + j] * h1[j];
            }
            h2[h] = acc.tanh();
        }
        let mut out = vec![0.0; self.out_dim];
        for o in 0..self.out_dim {
            let mut acc = self.b3[o];
            for h in 0..self.hidden {
                acc += self.w3[o * self.hidden + h] * h2[h];
            }
            out[o] = acc;
        }
        (
            out,
            MlpTape {
                input: x.to_vec(),
                h1,
                h2,
            },
        )
    }

    /// Accumulate `d out / d params . dout` into `grad` (flat layout
    /// `w1, b1, w2, b2, w3, b3`, optionally offset for embedding in a larger
    /// parameter vector).
    pub fn backward_into(&self, tape: &MlpTape, dout: &[f64], grad: &mut [f64], offset: usize) {
        debug_assert_eq!(dout.len(), self.out_dim);
        let (w1n, b1n) = (self.hidden * self.in_dim, self.hidden);
        let (w2n, b2n) = (self.hidden * self.hidden, self.hidden);
        let w3n = self.out_dim * self.hidden;
        let (o_w1, o_b1) = (offset, offset + w1n);
        let (o_w2, o_b2) = (o_b1 + b1n, o_b1 + b1n + w2n);
        let (o_w3, o_b3) = (o_b2 + b2n, o_b2 + b2n + w3n);

        // Output layer.
        let mut dh2 = vec![0.0; self.hidden];
        for o in 0..self.out_dim {
            let d = dout[o];
            grad[o_b3 + o] += d;
            for h in 0..self.hidden {
                grad[o_w3 + o * self.hidden + h] += d * tape.h2[h];
                dh2[h] += d * self.w3[o * self.hidden + h];
            }
        }
        // Second hidden layer (tanh).
        let mut dh1 = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let d = dh2[h] * (1.0 - tape.h2[h] * tape.h2[h]);
            grad[o_b2 + h] += d;
            for j in 0..self.hidden {
                grad[o_w2 + h * self.hidden + j] += d * tape.h1[j];
                dh1[j] += d * self.w2[h * self.hidden + j];
            }
        }
        // First hidden layer.
        for h in 0..self.hidden {
            let d = dh1[h] * (1.0 - tape.h1[h] * tape.h1[h]);
            grad[o_b1 + h] += d;
            for i in 0..self.in_dim {
                grad[o_w1 + h * self.in_dim + i] += d * tape.input[i];
            }
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.extend(&self.b2);
        p.extend(&self.w3);
        p.extend(&self.b3);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::validation(format!(
                "parameter length {} != {}",
                params.len(),
                self.n_params()
            )));
        }
        let mut cursor = 0;
        for dst in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ] {
            dst.copy_from_slice(&params[cursor..cursor + dst.len()]);
            cursor += dst.len();
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Diagonal Gaussian policy
// ---------------------------------------------------------------------------

/// Diagonal-Gaussian policy: the mean comes from the tanh MLP, the log
/// standard deviation is a free state-independent parameter per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMlpPolicy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianMlpPolicy {
    /// Fresh policy with seeded weight init and unit standard deviation.
    pub fn new<R: Rng>(state_dim: usize, action_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            mean_net: Mlp::new(state_dim, hidden, action_dim, rng),
            log_std: vec![0.0; action_dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.mean_net.forward(state).0
    }

    fn check_dims(&self, state: &[f64], action: &[f64]) -> Result<()> {
        if state.len() != self.mean_net.in_dim || action.len() != self.log_std.len() {
            return Err(Error::validation(format!(
                "state/action dims ({}, {}) do not match policy ({}, {})",
                state.len(),
                action.len(),
                self.mean_net.in_dim,
                self.log_std.len()
            )));
        }
        Ok(())
    }
}

impl Policy for GaussianMlpPolicy {
    type State = Vec<f64>;
    type Action = Vec<f64>;

    fn log_prob(&self, state: &Vec<f64>, action: &Vec<f64>) -> Result<f64> {
        self.check_dims(state, action)?;
        let (mean, _) = self.mean_net.forward(state);
        let mut lp = 0.0;
        for d in 0..action.len() {
            let sigma = self.log_std[d].exp();
            let z = (action[d] - mean[d]) / sigma;
            lp += -0.5 * z * z - self.log_std[d] - HALF_LOG_TWO_PI;
        }
        if !lp.is_finite() {
            return Err(Error::numeric(format!("non-finite Gaussian log-density {lp}")));
        }
        Ok(lp)
    }

    fn sample_action<R: Rng>(&self, state: &Vec<f64>, rng: &mut R) -> Result<(Vec<f64>, f64)> {
        if state.len() != self.mean_net.in_dim {
            return Err(Error::validation("state dimension mismatch".to_string()));
        }
        let (mean, _) = self.mean_net.forward(state);
        let mut action = Vec::with_capacity(mean.len());
        let mut lp = 0.0;
        for d in 0..mean.len() {
            let sigma = self.log_std[d].exp();
            let z: f64 = rng.sample(StandardNormal);
            action.push(mean[d] + sigma * z);
            lp += -0.5 * z * z - self.log_std[d] - HALF_LOG_TWO_PI;
        }
        Ok((action, lp))
    }

    fn grad_log_prob(&self, state: &Vec<f64>, action: &Vec<f64>) -> Result<Vec<f64>> {
        self.check_dims(state, action)?;
        let (mean, tape) = self.mean_net.forward(state);
        let mut grad = vec![0.0; self.n_params()];
        // d logp / d mean_d = (a_d - mu_d) / sigma_d^2, pushed through the net.
        let dmean: Vec<f64> = (0..action.len())
            .map(|d| {
                let sigma = self.log_std[d].exp();
                (action[d] - mean[d]) / (sigma * sigma)
            })
            .collect();
        self.mean_net.backward_into(&tape, &dmean, &mut grad, 0);
        // d logp / d log_std_d = z_d^2 - 1.
        let base = self.mean_net.n_params();
        for d in 0..action.len() {
            let sigma = self.log_std[d].exp();
            let z = (action[d] - mean[d]) / sigma;
            grad[base + d] = z * z - 1.0;
        }
        Ok(grad)
    }

    fn n_params(&self) -> usize {
        self.mean_net.n_params() + self.log_std.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.mean_net.params();
        p.extend(&self.log_std);
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::validation(format!(
                "parameter length {} != {}",
                params.len(),
                self.n_params()
            )));
        }
        let split = self.mean_net.n_params();
        self.mean_net.set_params(&params[..split])?;
        self.log_std.copy_from_slice(&params[split..]);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// On-disk policy format: a `kind` header plus flat parameter arrays.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PolicyFile {
    #[serde(rename = "tabular_softmax")]
    TabularSoftmax {
        n_states: usize,
        n_actions: usize,
        logits: Vec<f64>,
    },
    #[serde(rename = "gaussian_mlp")]
    GaussianMlp {
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        params: Vec<f64>,
    },
}

impl PolicyFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("policy serialization cannot fail")
    }

    pub fn from_toml(doc: &str) -> Result<Self> {
        toml::from_str(doc).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl From<&TabularSoftmaxPolicy> for PolicyFile {
    fn from(p: &TabularSoftmaxPolicy) -> Self {
        PolicyFile::TabularSoftmax {
            n_states: p.n_states,
            n_actions: p.n_actions,
            logits: p.logits.clone(),
        }
    }
}

impl From<&GaussianMlpPolicy> for PolicyFile {
    fn from(p: &GaussianMlpPolicy) -> Self {
        PolicyFile::GaussianMlp {
            state_dim: p.mean_net.in_dim,
            action_dim: p.mean_net.out_dim,
            hidden: p.mean_net.hidden,
            params: p.params(),
        }
    }
}

impl TryFrom<PolicyFile> for TabularSoftmaxPolicy {
    type Error = Error;
    fn try_from(f: PolicyFile) -> Result<Self> {
        match f {
            PolicyFile::TabularSoftmax {
                n_states,
                n_actions,
                logits,
            } => TabularSoftmaxPolicy::from_logits(n_states, n_actions, logits),
            _ => Err(Error::validation("policy file is not tabular_softmax")),
        }
    }
}

impl TryFrom<PolicyFile> for GaussianMlpPolicy {
    type Error = Error;
    fn try_from(f: PolicyFile) -> Result<Self> {
        match f {
            PolicyFile::GaussianMlp {
                state_dim,
                action_dim,
                hidden,
                params,
            } => {
                let mut rng = crate::rng::stream_rng(0, &[crate::rng::domain::POLICY_INIT]);
                let mut policy = GaussianMlpPolicy::new(state_dim, action_dim, hidden, &mut rng);
                policy.set_params(&params)?;
                Ok(policy)
            }
            _ => Err(Error::validation("policy file is not gaussian_mlp")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream_rng};

    /// Central finite difference of `log_prob` in every parameter direction.
    fn fd_grad_log_prob<P: Policy>(policy: &P, s: &P::State, a: &P::Action, h: f64) -> Vec<f64>
    where
        P: Clone,
    {
        let base = policy.params();
        (0..policy.n_params())
            .map(|k| {
                let mut plus = policy.clone();
                let mut minus = policy.clone();
                let mut p = base.clone();
                p[k] += h;
                plus.set_params(&p).unwrap();
                p[k] -= 2.0 * h;
                minus.set_params(&p).unwrap();
                (plus.log_prob(s, a).unwrap() - minus.log_prob(s, a).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn assert_grad_close(analytic: &[f64], numeric: &[f64], rel_tol: f64) {
        let scale = numeric
            .iter()
            .fold(1.0f64, |m, x| m.max(x.abs()))
            .max(analytic.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        for (g, f) in analytic.iter().zip(numeric) {
            assert!(
                (g - f).abs() <= rel_tol * scale,
                "gradient mismatch: analytic {g} vs fd {f} (scale {scale})"
            );
        }
    }

    #[test]
    fn uniform_two_action_log_prob() {
        let p = TabularSoftmaxPolicy::new(3, 2);
        assert!((p.log_prob(&0, &1).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_row_gives_uniform() {
        let p = TabularSoftmaxPolicy::from_logits(1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        for a in 0..3 {
            assert!((p.log_prob(&0, &a).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_invariance_and_normalization() {
        let mut rng = stream_rng(3, &[domain::POLICY_INIT, 0]);
        for _ in 0..10 {
            let logits: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 40.0 - 20.0).collect();
            let p = TabularSoftmaxPolicy::from_logits(2, 4, logits.clone()).unwrap();
            let shifted: Vec<f64> = logits
                .iter()
                .enumerate()
                .map(|(i, &x)| if i < 4 { x + 123.456 } else { x })
                .collect();
            let q = TabularSoftmaxPolicy::from_logits(2, 4, shifted).unwrap();
            for a in 0..4 {
                let lp = p.log_prob(&0, &a).unwrap();
                let lq = q.log_prob(&0, &a).unwrap();
                assert!((lp - lq).abs() < 1e-12);
            }
            for s in 0..2 {
                let sum: f64 = p.probs_row(s).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_gradient_closed_form_and_zero_mean() {
        let p = TabularSoftmaxPolicy::new(2, 2);
        let g = p.grad_log_prob(&0, &0).unwrap();
        assert_eq!(g, vec![0.5, -0.5, 0.0, 0.0]);

        let mut rng = stream_rng(4, &[domain::POLICY_INIT, 1]);
        let logits: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let p = TabularSoftmaxPolicy::from_logits(2, 3, logits).unwrap();
        for s in 0..2 {
            let probs = p.probs_row(s);
            let mut mean = vec![0.0; p.n_params()];
            for a in 0..3 {
                let g = p.grad_log_prob(&s, &a).unwrap();
                for (m, gi) in mean.iter_mut().zip(&g) {
                    *m += probs[a] * gi;
                }
            }
            assert!(mean.iter().all(|&x| x.abs() < 1e-10));
        }
    }

    #[test]
    fn ratio_examples() {
        let a = TabularSoftmaxPolicy::from_probs(&TabularPolicy::two_action(1, 0.9).unwrap());
        let b = TabularSoftmaxPolicy::from_probs(&TabularPolicy::two_action(1, 0.5).unwrap());
        assert!((ratio(&a, &b, &0, &0).unwrap() - 1.8).abs() < 1e-12);
        assert!((ratio(&a, &a, &0, &0).unwrap() - 1.0).abs() < 1e-15);

        let mut rng = stream_rng(5, &[domain::POLICY_INIT, 2]);
        for _ in 0..20 {
            let p: f64 = rng.random::<f64>() * 0.98 + 0.01;
            let q: f64 = rng.random::<f64>() * 0.98 + 0.01;
            let pt = TabularSoftmaxPolicy::from_probs(&TabularPolicy::two_action(1, q).unwrap());
            let pb = TabularSoftmaxPolicy::from_probs(&TabularPolicy::two_action(1, p).unwrap());
            let r = ratio(&pt, &pb, &0, &0).unwrap();
            assert!((r * p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_support_ratio_is_an_error() {
        let behavior =
            TabularSoftmaxPolicy::from_probs(&TabularPolicy::new(1, 2, vec![1.0, 0.0]).unwrap());
        let target = TabularSoftmaxPolicy::new(1, 2);
        assert!(matches!(
            ratio(&target, &behavior, &0, &1),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn gaussian_standard_normal_mode() {
        let mut rng = stream_rng(6, &[domain::POLICY_INIT, 3]);
        let mut p = GaussianMlpPolicy::new(2, 1, 4, &mut rng);
        // Zero the net so the mean is exactly 0 with sigma = 1.
        p.set_params(&vec![0.0; p.n_params()]).unwrap();
        let lp = p.log_prob(&vec![0.3, -0.7], &vec![0.0]).unwrap();
        assert!((lp + HALF_LOG_TWO_PI).abs() < 1e-15);
    }

    #[test]
    fn gaussian_log_std_gradient_at_mean() {
        let mut rng = stream_rng(7, &[domain::POLICY_INIT, 4]);
        let p = GaussianMlpPolicy::new(3, 2, 8, &mut rng);
        let s = vec![0.1, -0.2, 0.4];
        let a = p.mean(&s);
        let g = p.grad_log_prob(&s, &a).unwrap();
        let base = p.mean_net.n_params();
        assert!((g[base] + 1.0).abs() < 1e-12);
        assert!((g[base + 1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences_tabular() {
        for seed in 0..50 {
            let mut rng = stream_rng(seed, &[domain::POLICY_INIT, 5]);
            let logits: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let p = TabularSoftmaxPolicy::from_logits(5, 2, logits).unwrap();
            let s = (rng.random::<f64>() * 5.0) as usize;
            let a = (rng.random::<f64>() * 2.0) as usize;
            let g = p.grad_log_prob(&s, &a).unwrap();
            let fd = fd_grad_log_prob(&p, &s, &a, 1e-5);
            assert_grad_close(&g, &fd, 1e-6);
        }
    }

    #[test]
    fn gradients_match_finite_differences_gaussian() {
        for seed in 0..50 {
            let mut rng = stream_rng(seed, &[domain::POLICY_INIT, 6]);
            let mut p = GaussianMlpPolicy::new(3, 2, 6, &mut rng);
            // Randomize log_std away from zero as well.
            let mut params = p.params();
            let n = params.len();
            params[n - 2] = 0.3;
            params[n - 1] = -0.4;
            p.set_params(&params).unwrap();
            let s: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let a: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let g = p.grad_log_prob(&s, &a).unwrap();
            let fd = fd_grad_log_prob(&p, &s, &a, 1e-5);
            assert_grad_close(&g, &fd, 1e-6);
        }
    }

    #[test]
    fn policy_file_round_trip() {
        let mut rng = stream_rng(8, &[domain::POLICY_INIT, 7]);
        let logits: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let p = TabularSoftmaxPolicy::from_logits(5, 2, logits).unwrap();
        let doc = PolicyFile::from(&p).to_toml();
        let q: TabularSoftmaxPolicy = PolicyFile::from_toml(&doc).unwrap().try_into().unwrap();
        assert_eq!(p, q);

        let g = GaussianMlpPolicy::new(4, 2, 8, &mut rng);
        let doc = PolicyFile::from(&g).to_toml();
        let h: GaussianMlpPolicy = PolicyFile::from_toml(&doc).unwrap().try_into().unwrap();
        assert_eq!(g, h);
    }
}
