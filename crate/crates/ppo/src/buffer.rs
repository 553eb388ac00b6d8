//! On-policy rollout storage and advantage estimation.

use crate::policy::HybridAction;

/// Generalized advantage estimates and the matching return targets.
///
/// `dones[t]` marks that the episode ended after step `t`; `last_value` is
/// the critic's estimate for the state after the final step.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "ragged rollout");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit variance.
pub fn normalize(x: &mut [f64]) {
    if x.len() < 2 {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    for v in x {
        *v = (*v - mean) / sd;
    }
}

#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<HybridAction>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Vec<f64>, action: HybridAction, log_prob: f64, value: f64, reward: f64, done: bool) {
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Fills advantages (normalized) and returns (raw).
    pub fn finish(&mut self, last_value: f64, gamma: f64, lam: f64) {
        let (mut adv, ret) = gae(&self.rewards, &self.values, &self.dones, last_value, gamma, lam);
        normalize(&mut adv);
        self.advantages = adv;
        self.returns = ret;
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}
