//! Clipped-surrogate updates and the on-policy training loop.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::RolloutBuffer;
use crate::error::{EnvFailure, PpoError, Result};
use crate::optim::{clip_grad_norm, Adam};
use crate::policy::{HybridAction, HybridPolicy, PolicyConfig};
use crate::tape::{Mat, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Environment steps between updates.
    pub rollout: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Divide rewards by a running estimate of the discounted-return spread.
    pub normalize_rewards: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            actor_lr: 2e-4,
            critic_lr: 2e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 32,
            rollout: 128,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_rewards: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(PpoError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        let positive = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("clip", self.clip),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PpoError::Config(format!("{name} must be > 0")));
            }
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout == 0 {
            return Err(PpoError::Config("epochs, minibatch and rollout must be >= 1".into()));
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return Err(PpoError::Config("loss coefficients must be >= 0".into()));
        }
        Ok(())
    }
}

/// Mean of `min(r A, clip(r, 1-c, 1+c) A)`.
pub fn clipped_surrogate(ratios: &[f64], advantages: &[f64], clip: f64) -> f64 {
    let n = ratios.len().max(1) as f64;
    ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(r.clamp(1.0 - clip, 1.0 + clip) * a))
        .sum::<f64>()
        / n
}

/// Loss terms averaged over one update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Set when a non-finite loss rolled the parameters back.
    pub aborted: bool,
}

/// Running mean and variance (parallel Welford).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    count: f64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn var(&self) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            self.m2 / self.count
        }
    }
}

/// Scales rewards by the spread of the running discounted return.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    ret: f64,
    stat: RunningStat,
}

impl RewardScaler {
    pub fn scale(&mut self, reward: f64, gamma: f64, done: bool) -> f64 {
        self.ret = self.ret * gamma + reward;
        self.stat.push(self.ret);
        if done {
            self.ret = 0.0;
        }
        reward / (self.stat.var().sqrt() + 1e-8)
    }
}

/// Loss terms for one minibatch plus the gradient of their weighted sum.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub log_ratio: Vec<f64>,
    pub grads: Vec<Mat>,
}

/// What one environment step returns.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment driven by hybrid actions.
pub trait HybridEnv {
    fn reset(&mut self, seed: u64) -> std::result::Result<Vec<f64>, EnvFailure>;
    fn step(&mut self, action: &HybridAction) -> std::result::Result<Transition, EnvFailure>;
}

/// Per-episode returns and per-update losses from a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Sum of raw rewards per finished episode.
    pub episode_returns: Vec<f64>,
    /// Mean raw reward per step per finished episode.
    pub episode_means: Vec<f64>,
    pub updates: Vec<UpdateStats>,
    pub steps: usize,
}

impl TrainLog {
    /// Mean per-step reward over the last `n` finished episodes.
    pub fn trailing_mean(&self, n: usize) -> f64 {
        let tail = &self.episode_means[self.episode_means.len().saturating_sub(n)..];
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct Ppo {
    pub policy: HybridPolicy,
    pub config: PpoConfig,
    actor_opt: Adam,
    critic_opt: Adam,
    scaler: RewardScaler,
    rng: ChaCha8Rng,
}

impl Ppo {
    /// Builds the networks from `seed`; the same seed reproduces the same run.
    pub fn new(policy: PolicyConfig, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = HybridPolicy::new(policy, &mut rng)?;
        Ok(Self::from_policy(policy, config, rng.next_u64()))
    }

    pub fn from_policy(policy: HybridPolicy, config: PpoConfig, seed: u64) -> Self {
        Self {
            actor_opt: Adam::new(config.actor_lr),
            critic_opt: Adam::new(config.critic_lr),
            policy,
            config,
            scaler: RewardScaler::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Several epochs of clipped-surrogate minibatch updates over a
    /// finished buffer.
    pub fn update(&mut self, buffer: &RolloutBuffer) -> Result<UpdateStats> {
        let n = buffer.len();
        if n == 0 || buffer.advantages.len() != n {
            return Err(PpoError::Shape("buffer is empty or not finished".into()));
        }
        let snapshot = (self.policy.clone(), self.actor_opt.clone(), self.critic_opt.clone());
        let mut stats = UpdateStats::default();
        let mut batches = 0usize;
        let mut idx: Vec<usize> = (0..n).collect();
        let cfg = self.config.clone();
        for _ in 0..cfg.epochs {
            idx.shuffle(&mut self.rng);
            for chunk in idx.chunks(cfg.minibatch) {
                match self.minibatch_step(buffer, chunk)? {
                    Some(s) => {
                        stats.policy_loss += s.policy_loss;
                        stats.value_loss += s.value_loss;
                        stats.entropy += s.entropy;
                        stats.approx_kl += s.approx_kl;
                        stats.clip_fraction += s.clip_fraction;
                        batches += 1;
                    }
                    None => {
                        log::warn!("non-finite PPO loss, restoring previous parameters");
                        (self.policy, self.actor_opt, self.critic_opt) = snapshot;
                        return Ok(UpdateStats {
                            aborted: true,
                            ..UpdateStats::default()
                        });
                    }
                }
            }
        }
        let b = batches.max(1) as f64;
        stats.policy_loss /= b;
        stats.value_loss /= b;
        stats.entropy /= b;
        stats.approx_kl /= b;
        stats.clip_fraction /= b;
        Ok(stats)
    }

    /// Loss on the buffer rows in `chunk` and its gradient with respect to
    /// every policy array, in [`HybridPolicy::params`] order.
    pub fn loss_and_grads(&self, buffer: &RolloutBuffer, chunk: &[usize]) -> Result<LossEval> {
        let m = chunk.len();
        let clip = self.config.clip;
        let mut tape = Tape::new();
        let leaves = self.policy.leaves(&mut tape);
        let obs: Vec<&[f64]> = chunk.iter().map(|&i| buffer.obs[i].as_slice()).collect();
        let acts: Vec<&HybridAction> = chunk.iter().map(|&i| &buffer.actions[i]).collect();
        let ev = self.policy.evaluate(&mut tape, &leaves, &obs, &acts)?;
        let col = |f: &dyn Fn(usize) -> f64| Mat::from_vec(m, 1, chunk.iter().map(|&i| f(i)).collect());
        let old_lp = tape.leaf(col(&|i| buffer.log_probs[i]));
        let adv = tape.leaf(col(&|i| buffer.advantages[i]));
        let ret = tape.leaf(col(&|i| buffer.returns[i]));

        let log_ratio = tape.sub(ev.log_prob, old_lp);
        let ratio = tape.exp(log_ratio);
        let s1 = tape.mul(ratio, adv);
        let clipped = tape.clamp(ratio, 1.0 - clip, 1.0 + clip);
        let s2 = tape.mul(clipped, adv);
        let surr = tape.min(s1, s2);
        let surr = tape.mean_all(surr);
        let policy_loss = tape.scale(surr, -1.0);
        let verr = tape.sub(ev.value, ret);
        let verr = tape.square(verr);
        let value_loss = tape.mean_all(verr);
        let entropy = tape.mean_all(ev.entropy);

        let vl = tape.scale(value_loss, self.config.value_coef);
        let el = tape.scale(entropy, -self.config.entropy_coef);
        let total = tape.add(policy_loss, vl);
        let total = tape.add(total, el);
        let grads = tape.backward(total);
        let params = leaves
            .actor
            .iter()
            .chain(std::iter::once(&leaves.log_std))
            .chain(&leaves.critic)
            .map(|&v| grads.or_zeros(v, tape.value(v)))
            .collect();
        Ok(LossEval {
            total: tape.value(total).scalar(),
            policy_loss: tape.value(policy_loss).scalar(),
            value_loss: tape.value(value_loss).scalar(),
            entropy: tape.value(entropy).scalar(),
            log_ratio: tape.value(log_ratio).data.clone(),
            grads: params,
        })
    }

    /// Returns `None` when the loss or a gradient is not finite.
    fn minibatch_step(&mut self, buffer: &RolloutBuffer, chunk: &[usize]) -> Result<Option<UpdateStats>> {
        let m = chunk.len() as f64;
        let clip = self.config.clip;
        let mut eval = self.loss_and_grads(buffer, chunk)?;
        if !eval.total.is_finite() {
            return Ok(None);
        }
        let n_actor = self.policy.actor.layers.len() * 2 + 1;
        let mut critic_grads = eval.grads.split_off(n_actor);
        let mut actor_grads = eval.grads;
        let an = clip_grad_norm(&mut actor_grads, self.config.max_grad_norm);
        let cn = clip_grad_norm(&mut critic_grads, self.config.max_grad_norm);
        if !(an.is_finite() && cn.is_finite()) {
            return Ok(None);
        }
        self.actor_opt.step(&mut self.policy.actor_params_mut(), &actor_grads);
        self.critic_opt.step(&mut self.policy.critic_params_mut(), &critic_grads);

        let lr = &eval.log_ratio;
        let approx_kl = lr.iter().map(|l| (l.exp() - 1.0) - l).sum::<f64>() / m;
        let clip_fraction = lr.iter().filter(|l| (l.exp() - 1.0).abs() > clip).count() as f64 / m;
        Ok(Some(UpdateStats {
            policy_loss: eval.policy_loss,
            value_loss: eval.value_loss,
            entropy: eval.entropy,
            approx_kl,
            clip_fraction,
            aborted: false,
        }))
    }

    /// Collects `steps` transitions, updating every `rollout` steps.
    /// Episode seeds are drawn from `seed`.
    pub fn train<E: HybridEnv>(&mut self, env: &mut E, steps: usize, seed: u64) -> Result<TrainLog> {
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let mut log = TrainLog::default();
        let mut buffer = RolloutBuffer::new();
        let mut obs = env.reset(seeds.next_u64()).map_err(PpoError::Env)?;
        let (mut ep_return, mut ep_len) = (0.0, 0usize);
        for step in 0..steps {
            let out = self.policy.act(&obs, false, &mut self.rng)?;
            let tr = env.step(&out.action).map_err(PpoError::Env)?;
            ep_return += tr.reward;
            ep_len += 1;
            let reward = if self.config.normalize_rewards {
                self.scaler.scale(tr.reward, self.config.gamma, tr.done)
            } else {
                tr.reward
            };
            buffer.push(obs, out.action, out.log_prob, out.value, reward, tr.done);
            obs = if tr.done {
                log.episode_returns.push(ep_return);
                log.episode_means.push(ep_return / ep_len as f64);
                (ep_return, ep_len) = (0.0, 0);
                env.reset(seeds.next_u64()).map_err(PpoError::Env)?
            } else {
                tr.obs
            };
            if buffer.len() == self.config.rollout || step + 1 == steps {
                let last_value = if buffer.dones.last() == Some(&true) {
                    0.0
                } else {
                    self.policy.value(&obs)?
                };
                buffer.finish(last_value, self.config.gamma, self.config.gae_lambda);
                let stats = self.update(&buffer)?;
                log::debug!("update at step {}: {:?}", step + 1, stats);
                log.updates.push(stats);
                buffer.clear();
            }
        }
        log.steps = steps;
        Ok(log)
    }

    /// Draws from the agent's own stream.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
