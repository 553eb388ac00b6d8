//! Hybrid action policy: Gaussian continuous head, independent Bernoulli
//! heads and one categorical head, with a separate critic.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PpoError, Result};
use crate::nn::Mlp;
use crate::tape::{log_softmax, sigmoid, softplus, Mat, Tape, Var};

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    /// `(lo, hi)` per continuous output.
    pub bounds: Vec<(f64, f64)>,
    pub binary: usize,
    /// Number of categories; 0 disables the head.
    pub categories: usize,
    pub init_log_std: f64,
}

impl PolicyConfig {
    pub fn new(obs_dim: usize, bounds: Vec<(f64, f64)>, binary: usize, categories: usize) -> Self {
        Self {
            obs_dim,
            hidden: vec![128, 128],
            bounds,
            binary,
            categories,
            init_log_std: 0.0,
        }
    }

    pub fn continuous(&self) -> usize {
        self.bounds.len()
    }

    fn head_width(&self) -> usize {
        self.continuous() + self.binary + self.categories
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 {
            return Err(PpoError::Config("obs_dim must be >= 1".into()));
        }
        if self.head_width() == 0 {
            return Err(PpoError::Config("policy has no action heads".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(PpoError::Config("hidden widths must be >= 1".into()));
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(PpoError::Config("each bound needs finite lo < hi".into()));
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return Err(PpoError::Config("init_log_std out of range".into()));
        }
        Ok(())
    }
}

/// One sampled action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    /// Pre-squash Gaussian sample; log-probabilities are taken here.
    pub raw: Vec<f64>,
    /// `raw` squashed into the configured bounds.
    pub continuous: Vec<f64>,
    pub binary: Vec<bool>,
    pub category: Option<usize>,
}

/// Log-probability of each head for one action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadLogProbs {
    pub gaussian: f64,
    pub bernoulli: f64,
    pub categorical: f64,
}

impl HeadLogProbs {
    pub fn joint(&self) -> f64 {
        self.gaussian + self.bernoulli + self.categorical
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActOutput {
    pub action: HybridAction,
    pub log_prob: f64,
    pub value: f64,
}

/// Tape handles for every trainable array.
pub struct PolicyLeaves {
    pub actor: Vec<Var>,
    pub log_std: Var,
    pub critic: Vec<Var>,
}

/// Batched evaluation results, each `n x 1`.
pub struct Evaluation {
    pub log_prob: Var,
    pub entropy: Var,
    pub value: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridPolicy {
    pub config: PolicyConfig,
    pub actor: Mlp,
    pub log_std: Mat,
    pub critic: Mlp,
}

fn squash(u: f64, (lo, hi): (f64, f64)) -> f64 {
    (lo + (hi - lo) * sigmoid(u)).clamp(lo, hi)
}

impl HybridPolicy {
    pub fn new<R: Rng + ?Sized>(config: PolicyConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![config.obs_dim];
        sizes.extend(&config.hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(config.head_width());
        sizes.push(1);
        let actor = Mlp::new(&actor_sizes, rng);
        let critic = Mlp::new(&sizes, rng);
        let log_std = Mat::filled(1, config.continuous(), config.init_log_std);
        Ok(Self {
            config,
            actor,
            log_std,
            critic,
        })
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.config.obs_dim {
            return Err(PpoError::Shape(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                self.config.obs_dim
            )));
        }
        Ok(())
    }

    fn std(&self, i: usize) -> f64 {
        self.log_std.data[i].clamp(LOG_STD_MIN, LOG_STD_MAX).exp()
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        self.check_obs(obs)?;
        Ok(self.critic.forward(obs)[0])
    }

    /// Samples an action, or takes the mode of every head when
    /// `deterministic` is set.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<ActOutput> {
        self.check_obs(obs)?;
        let out = self.actor.forward(obs);
        let c = self.config.continuous();
        let nb = self.config.binary;
        let raw: Vec<f64> = (0..c)
            .map(|i| {
                if deterministic {
                    out[i]
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    out[i] + self.std(i) * z
                }
            })
            .collect();
        let binary = out[c..c + nb]
            .iter()
            .map(|&l| if deterministic { l > 0.0 } else { rng.random_bool(sigmoid(l)) })
            .collect();
        let category = (self.config.categories > 0).then(|| {
            let logits = &out[c + nb..];
            if deterministic {
                argmax(logits)
            } else {
                let lp = log_softmax(logits);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                lp.iter()
                    .position(|l| {
                        acc += l.exp();
                        u < acc
                    })
                    .unwrap_or(lp.len() - 1)
            }
        });
        let continuous = raw.iter().zip(&self.config.bounds).map(|(&u, &b)| squash(u, b)).collect();
        let action = HybridAction {
            raw,
            continuous,
            binary,
            category,
        };
        let log_prob = self.head_log_probs_from(&out, &action)?.joint();
        let value = self.critic.forward(obs)[0];
        Ok(ActOutput {
            action,
            log_prob,
            value,
        })
    }

    /// Mode of every head from the actor alone, without the critic.
    pub fn decide(&self, obs: &[f64]) -> Result<HybridAction> {
        self.check_obs(obs)?;
        let out = self.actor.forward(obs);
        let c = self.config.continuous();
        let nb = self.config.binary;
        let raw = out[..c].to_vec();
        let continuous = raw.iter().zip(&self.config.bounds).map(|(&u, &b)| squash(u, b)).collect();
        Ok(HybridAction {
            raw,
            continuous,
            binary: out[c..c + nb].iter().map(|&l| l > 0.0).collect(),
            category: (self.config.categories > 0).then(|| argmax(&out[c + nb..])),
        })
    }

    /// Per-head log-probabilities of `action` at `obs`.
    pub fn head_log_probs(&self, obs: &[f64], action: &HybridAction) -> Result<HeadLogProbs> {
        self.check_obs(obs)?;
        self.head_log_probs_from(&self.actor.forward(obs), action)
    }

    pub fn log_prob(&self, obs: &[f64], action: &HybridAction) -> Result<f64> {
        Ok(self.head_log_probs(obs, action)?.joint())
    }

    fn check_action(&self, action: &HybridAction) -> Result<()> {
        let ok = action.raw.len() == self.config.continuous()
            && action.binary.len() == self.config.binary
            && match action.category {
                Some(c) => c < self.config.categories,
                None => self.config.categories == 0,
            };
        if ok {
            Ok(())
        } else {
            Err(PpoError::Shape("action does not match the policy heads".into()))
        }
    }

    fn head_log_probs_from(&self, out: &[f64], action: &HybridAction) -> Result<HeadLogProbs> {
        self.check_action(action)?;
        let c = self.config.continuous();
        let nb = self.config.binary;
        let gaussian = action
            .raw
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let ls = self.log_std.data[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let z = (u - out[i]) / ls.exp();
                -0.5 * z * z - ls - HALF_LN_2PI
            })
            .sum();
        let bernoulli = action
            .binary
            .iter()
            .zip(&out[c..c + nb])
            .map(|(&x, &l)| if x { -softplus(-l) } else { -softplus(l) })
            .sum();
        let categorical = action.category.map_or(0.0, |k| log_softmax(&out[c + nb..])[k]);
        Ok(HeadLogProbs {
            gaussian,
            bernoulli,
            categorical,
        })
    }

    pub fn leaves(&self, tape: &mut Tape) -> PolicyLeaves {
        PolicyLeaves {
            actor: self.actor.leaves(tape),
            log_std: tape.leaf(self.log_std.clone()),
            critic: self.critic.leaves(tape),
        }
    }

    /// Records log-probability, entropy and value for a batch.
    pub fn evaluate(
        &self,
        tape: &mut Tape,
        leaves: &PolicyLeaves,
        obs: &[&[f64]],
        actions: &[&HybridAction],
    ) -> Result<Evaluation> {
        let n = obs.len();
        if n == 0 || actions.len() != n {
            return Err(PpoError::Shape("evaluation batch is empty or ragged".into()));
        }
        for (o, a) in obs.iter().zip(actions) {
            self.check_obs(o)?;
            self.check_action(a)?;
        }
        let c = self.config.continuous();
        let nb = self.config.binary;
        let nc = self.config.categories;
        let x = tape.leaf(Mat::from_rows(&obs.iter().map(|o| o.to_vec()).collect::<Vec<_>>()));
        let out = self.actor.forward_tape(tape, x, &leaves.actor);
        let mut log_prob: Option<Var> = None;
        let mut entropy: Option<Var> = None;
        let accumulate = |tape: &mut Tape, slot: &mut Option<Var>, v: Var| {
            *slot = Some(match *slot {
                Some(acc) => tape.add(acc, v),
                None => v,
            });
        };
        if c > 0 {
            let mean = tape.cols(out, 0, c);
            let ls = tape.broadcast_rows(leaves.log_std, n);
            let ls = tape.clamp(ls, LOG_STD_MIN, LOG_STD_MAX);
            let u = tape.leaf(Mat::from_rows(&actions.iter().map(|a| a.raw.clone()).collect::<Vec<_>>()));
            let diff = tape.sub(u, mean);
            let neg_ls = tape.scale(ls, -1.0);
            let inv_std = tape.exp(neg_ls);
            let z = tape.mul(diff, inv_std);
            let z2 = tape.square(z);
            let half = tape.scale(z2, -0.5);
            let per = tape.sub(half, ls);
            let lp = tape.sum_cols(per);
            let lp = tape.add_scalar(lp, -(c as f64) * HALF_LN_2PI);
            accumulate(tape, &mut log_prob, lp);
            let h = tape.sum_cols(ls);
            let h = tape.add_scalar(h, c as f64 * (0.5 + HALF_LN_2PI));
            accumulate(tape, &mut entropy, h);
        }
        if nb > 0 {
            let logits = tape.cols(out, c, c + nb);
            let signs = Mat::from_rows(
                &actions
                    .iter()
                    .map(|a| a.binary.iter().map(|&b| if b { -1.0 } else { 1.0 }).collect())
                    .collect::<Vec<_>>(),
            );
            let s = tape.leaf(signs);
            let signed = tape.mul(logits, s);
            let sp = tape.softplus(signed);
            let lp = tape.sum_cols(sp);
            let lp = tape.scale(lp, -1.0);
            accumulate(tape, &mut log_prob, lp);
            let spl = tape.softplus(logits);
            let p = tape.sigmoid(logits);
            let lpl = tape.mul(logits, p);
            let h = tape.sub(spl, lpl);
            let h = tape.sum_cols(h);
            accumulate(tape, &mut entropy, h);
        }
        if nc > 0 {
            let logits = tape.cols(out, c + nb, c + nb + nc);
            let lsm = tape.log_softmax(logits);
            let mut onehot = Mat::zeros(n, nc);
            for (r, a) in actions.iter().enumerate() {
                if let Some(k) = a.category {
                    onehot.data[r * nc + k] = 1.0;
                }
            }
            let oh = tape.leaf(onehot);
            let picked = tape.mul(lsm, oh);
            let lp = tape.sum_cols(picked);
            accumulate(tape, &mut log_prob, lp);
            let p = tape.exp(lsm);
            let plp = tape.mul(p, lsm);
            let h = tape.sum_cols(plp);
            let h = tape.scale(h, -1.0);
            accumulate(tape, &mut entropy, h);
        }
        let value = self.critic.forward_tape(tape, x, &leaves.critic);
        Ok(Evaluation {
            log_prob: log_prob.expect("at least one head"),
            entropy: entropy.expect("at least one head"),
            value,
        })
    }

    /// Actor arrays followed by `log_std`.
    pub fn actor_params_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = self.actor.params_mut();
        v.push(&mut self.log_std);
        v
    }

    pub fn critic_params_mut(&mut self) -> Vec<&mut Mat> {
        self.critic.params_mut()
    }

    /// Every trainable array: actor, `log_std`, critic.
    pub fn params(&self) -> Vec<&Mat> {
        let mut v = self.actor.params();
        v.push(&self.log_std);
        v.extend(self.critic.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = self.actor.params_mut();
        v.push(&mut self.log_std);
        v.extend(self.critic.params_mut());
        v
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> HybridPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = PolicyConfig::new(5, vec![(0.0, 2000.0), (0.0, 2000.0), (0.2, 1.0)], 3, 3);
        cfg.hidden = vec![16, 16];
        HybridPolicy::new(cfg, &mut rng).unwrap()
    }

    #[test]
    fn joint_log_prob_is_sum_of_heads() {
        let p = policy(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = [0.1, 0.2, -0.3, 0.4, 0.0];
        for _ in 0..20 {
            let out = p.act(&obs, false, &mut rng).unwrap();
            let h = p.head_log_probs(&obs, &out.action).unwrap();
            assert!((out.log_prob - (h.gaussian + h.bernoulli + h.categorical)).abs() < 1e-12);
        }
    }

    #[test]
    fn taped_evaluation_matches_plain_log_prob() {
        let p = policy(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs: Vec<Vec<f64>> = (0..4).map(|i| vec![0.1 * i as f64, 0.5, -0.2, 0.3, 1.0]).collect();
        let acts: Vec<HybridAction> = obs.iter().map(|o| p.act(o, false, &mut rng).unwrap().action).collect();
        let mut tape = Tape::new();
        let leaves = p.leaves(&mut tape);
        let o: Vec<&[f64]> = obs.iter().map(Vec::as_slice).collect();
        let a: Vec<&HybridAction> = acts.iter().collect();
        let ev = p.evaluate(&mut tape, &leaves, &o, &a).unwrap();
        for i in 0..4 {
            let plain = p.log_prob(&obs[i], &acts[i]).unwrap();
            assert!((tape.value(ev.log_prob).data[i] - plain).abs() < 1e-10);
            assert!((tape.value(ev.value).data[i] - p.value(&obs[i]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_matches_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = PolicyConfig::new(2, vec![(0.0, 1.0)], 1, 2);
        cfg.hidden = vec![4];
        cfg.init_log_std = -0.5;
        let mut p = HybridPolicy::new(cfg, &mut rng).unwrap();
        // Zero the output layer so every head sits at its uniform point.
        for m in p.actor.layers.last_mut().unwrap().w.data.iter_mut() {
            *m = 0.0;
        }
        let obs = [0.3, -0.7];
        let act = p.act(&obs, true, &mut rng).unwrap().action;
        let mut tape = Tape::new();
        let leaves = p.leaves(&mut tape);
        let ev = p.evaluate(&mut tape, &leaves, &[&obs], &[&act]).unwrap();
        let gauss = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() - 0.5;
        let expected = gauss + 2f64.ln() + 2f64.ln();
        assert!((tape.value(ev.entropy).scalar() - expected).abs() < 1e-12);
    }

    #[test]
    fn deterministic_action_takes_head_modes() {
        let p = policy(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = [0.5, -0.5, 0.25, 0.0, 1.0];
        let a = p.act(&obs, true, &mut rng).unwrap();
        let b = p.act(&obs, true, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(p.decide(&obs).unwrap(), a.action);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let p = policy(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(p.act(&[0.0; 4], false, &mut rng).is_err());
        let mut a = p.act(&[0.0; 5], false, &mut rng).unwrap().action;
        a.category = Some(3);
        assert!(p.log_prob(&[0.0; 5], &a).is_err());
        let bad = PolicyConfig::new(3, vec![(1.0, 1.0)], 0, 0);
        assert!(HybridPolicy::new(bad, &mut rng).is_err());
    }
}
