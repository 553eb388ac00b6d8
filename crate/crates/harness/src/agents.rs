//! Adapters between the slot environment and the hybrid-action agent.

use std::f64::consts::TAU;

use risnoma_core::action::OptimizerChoice;
use risnoma_core::channel::PhaseVector;
use risnoma_core::noma::DecodingOrder;
use risnoma_env::{Decision, DirectControls, EnvConfig, LearnedAction, Observation, SemanticNomaEnv};
use risnoma_ppo::{EnvFailure, HybridAction, HybridEnv, PolicyConfig, Transition};

use crate::config::PolicySection;
use crate::error::Result;

/// What the agent controls and who sets the remaining variables.
///
/// Every kind learns `D` and `Z` as fractions: `D` of the raw bits on
/// hand this slot, `Z` of the semantic bits that could be on hand after
/// extracting `D` at depth one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentKind {
    /// `(D, Z, psi)` plus the optimizer mode.
    Modes,
    /// `(D, Z, psi)`; every optimizer mode runs each slot.
    AllModes,
    /// `(D, Z, psi)` plus depths, order priorities and phases.
    Direct,
}

impl AgentKind {
    pub fn policy_config(self, env: &EnvConfig, section: &PolicySection) -> PolicyConfig {
        let k = env.num_users();
        let mut bounds = vec![(0.0, 1.0); 2 * k];
        if self == Self::Direct {
            bounds.extend(std::iter::repeat_n((env.sem.rho_min, 1.0), k));
            bounds.extend(std::iter::repeat_n((0.0, 1.0), k));
            bounds.extend(std::iter::repeat_n((0.0, TAU), env.num_elements()));
        }
        let categories = if self == Self::Modes { OptimizerChoice::ALL.len() } else { 0 };
        let mut cfg = PolicyConfig::new(env.obs_dim(), bounds, k, categories);
        cfg.hidden = section.hidden.clone();
        cfg.init_log_std = section.init_log_std;
        cfg
    }

    /// Splits an agent action taken at `obs` into the environment's learned
    /// part and the decision for the optimized part.
    pub fn decode(self, env: &EnvConfig, obs: &Observation, a: &HybridAction) -> Result<(LearnedAction, Decision)> {
        let k = env.num_users();
        let c = &a.continuous;
        let extract: Vec<f64> = (0..k).map(|i| c[i] * (obs.raw_backlog[i] + obs.last_arrival[i])).collect();
        let transmit: Vec<f64> = (0..k).map(|i| c[k + i] * (obs.sem_backlog[i] + extract[i])).collect();
        let mode = match a.category {
            Some(i) => OptimizerChoice::from_index(i + 1)?,
            None => OptimizerChoice::Extraction,
        };
        let learned = LearnedAction {
            extract,
            transmit,
            schedule: a.binary.clone(),
            mode,
        };
        let decision = match self {
            Self::Modes => Decision::Dispatch,
            Self::AllModes => Decision::AllSelection,
            Self::Direct => {
                let prio = &c[3 * k..4 * k];
                let mut seq: Vec<usize> = (0..k).collect();
                seq.sort_by(|&x, &y| prio[y].total_cmp(&prio[x]));
                Decision::Direct(DirectControls {
                    rho: c[2 * k..3 * k].to_vec(),
                    order: DecodingOrder::from_sequence(seq)?,
                    phases: PhaseVector::new(c[4 * k..].to_vec()),
                })
            }
        };
        Ok((learned, decision))
    }
}

/// The slot environment seen through an agent's action space.
pub struct AgentEnv {
    pub env: SemanticNomaEnv,
    pub kind: AgentKind,
    last: Option<Observation>,
}

impl AgentEnv {
    pub fn new(cfg: EnvConfig, kind: AgentKind) -> Result<Self> {
        Ok(Self {
            env: SemanticNomaEnv::new(cfg)?,
            kind,
            last: None,
        })
    }
}

impl HybridEnv for AgentEnv {
    fn reset(&mut self, seed: u64) -> std::result::Result<Vec<f64>, EnvFailure> {
        let obs = self.env.reset(seed)?;
        let v = obs.vector().to_vec();
        self.last = Some(obs);
        Ok(v)
    }

    fn step(&mut self, action: &HybridAction) -> std::result::Result<Transition, EnvFailure> {
        let obs = self.last.as_ref().ok_or("step before reset")?;
        let (learned, decision) = self.kind.decode(self.env.config(), obs, action)?;
        let out = self.env.step_with(&learned, &decision)?;
        let v = out.observation.vector().to_vec();
        self.last = Some(out.observation);
        Ok(Transition {
            obs: v,
            reward: out.reward,
            done: out.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use risnoma_ppo::HybridPolicy;

    fn small_env() -> EnvConfig {
        let mut cfg = EnvConfig::default();
        cfg.geometry.ris_elements = 8;
        cfg
    }

    #[test]
    fn action_space_sizes() {
        let env = small_env();
        let sec = PolicySection::default();
        let m = AgentKind::Modes.policy_config(&env, &sec);
        assert_eq!((m.continuous(), m.binary, m.categories), (6, 3, 3));
        let a = AgentKind::AllModes.policy_config(&env, &sec);
        assert_eq!((a.continuous(), a.categories), (6, 0));
        let d = AgentKind::Direct.policy_config(&env, &sec);
        assert_eq!((d.continuous(), d.binary, d.categories), (6 + 3 + 3 + 8, 3, 0));
    }

    #[test]
    fn direct_decoding_orders_by_priority() {
        let env = small_env();
        let mut sim = SemanticNomaEnv::new(env.clone()).unwrap();
        let obs = sim.reset(1).unwrap();
        let mut c = vec![0.5; 6];
        c.extend([0.5, 0.6, 0.7]);
        c.extend([0.1, 0.9, 0.5]);
        c.extend(vec![1.0; 8]);
        let a = HybridAction {
            raw: vec![0.0; c.len()],
            continuous: c,
            binary: vec![true; 3],
            category: None,
        };
        let (learned, decision) = AgentKind::Direct.decode(&env, &obs, &a).unwrap();
        assert_eq!(learned.schedule, vec![true; 3]);
        for i in 0..3 {
            let d = 0.5 * (obs.raw_backlog[i] + obs.last_arrival[i]);
            assert_eq!(learned.extract[i], d);
            assert_eq!(learned.transmit[i], 0.5 * (obs.sem_backlog[i] + d));
        }
        let Decision::Direct(ctrl) = decision else { panic!("expected direct controls") };
        assert_eq!(ctrl.order.sequence(), &[1, 2, 0]);
        assert_eq!(ctrl.rho, vec![0.5, 0.6, 0.7]);
        assert_eq!(ctrl.phases.len(), 8);
    }

    #[test]
    fn every_agent_kind_steps_the_environment() {
        for kind in [AgentKind::Modes, AgentKind::AllModes, AgentKind::Direct] {
            let cfg = small_env();
            let pc = kind.policy_config(&cfg, &PolicySection { hidden: vec![8], init_log_std: 0.0 });
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let policy = HybridPolicy::new(pc, &mut rng).unwrap();
            let mut env = AgentEnv::new(cfg, kind).unwrap();
            let mut obs = env.reset(3).unwrap();
            for _ in 0..5 {
                let a = policy.act(&obs, false, &mut rng).unwrap().action;
                let tr = env.step(&a).unwrap();
                assert!(tr.reward.is_finite());
                obs = tr.obs;
            }
        }
    }
}
