//! Training and evaluation of one scheme.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risnoma_core::slotopt::{Ablation, JtacOptions};
use risnoma_env::{
    Decision, EnvConfig, EpisodeTrace, ExtractionMode, LearnedAction, Observation, SemanticNomaEnv,
};
use risnoma_ppo::{HybridAction, HybridEnv, HybridPolicy, Ppo, TrainLog};
use serde::{Deserialize, Serialize};

use crate::agents::{AgentEnv, AgentKind};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::scheme::Scheme;
use crate::stats::{mean_rho, mode_histogram};

/// Offset between a run's training seed and its evaluation seed, so
/// evaluation channels are never seen in training.
pub const EVAL_SEED_OFFSET: u64 = 1_000_003;

/// Episodes averaged for the learning-curve summary.
pub const TRAILING_EPISODES: usize = 100;

/// Summary of one evaluated run. Every number is recomputable from the
/// per-slot trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scheme: String,
    pub seed: u64,
    /// Swept parameter and its value, when the run is part of a sweep.
    pub param: Option<String>,
    pub value: Option<f64>,
    pub num_users: usize,
    pub num_elements: usize,
    pub mean_arrival: f64,
    pub slots: usize,
    /// Recovered raw bits over energy across the whole trace.
    pub energy_efficiency: f64,
    pub mean_eta: f64,
    pub mean_reward: f64,
    pub mean_penalty: f64,
    pub mean_backlog: f64,
    pub window_compliance: f64,
    pub mean_decision_secs: f64,
    pub mean_rho: f64,
    pub mode_frequencies: [f64; 3],
    pub train_episodes: usize,
    /// Mean per-step training reward over the last finished episodes.
    pub train_trailing_reward: Option<f64>,
    pub trace_path: Option<PathBuf>,
}

impl RunReport {
    pub fn from_trace(scheme: Scheme, seed: u64, env: &EnvConfig, trace: &EpisodeTrace, train: Option<&TrainLog>) -> Self {
        Self {
            scheme: scheme.name().into(),
            seed,
            param: None,
            value: None,
            num_users: env.num_users(),
            num_elements: env.num_elements(),
            mean_arrival: env.arrival_mean.iter().sum::<f64>() / env.num_users() as f64,
            slots: trace.len(),
            energy_efficiency: trace.energy_efficiency(),
            mean_eta: trace.mean_eta(),
            mean_reward: trace.mean_reward(),
            mean_penalty: trace.mean_penalty(),
            mean_backlog: trace.mean_backlog(),
            window_compliance: trace.window_compliance(env.b_max),
            mean_decision_secs: trace.mean_decision_secs(),
            mean_rho: mean_rho(trace),
            mode_frequencies: mode_histogram(trace),
            train_episodes: train.map_or(0, |t| t.episode_means.len()),
            train_trailing_reward: train.map(|t| t.trailing_mean(TRAILING_EPISODES)),
            trace_path: None,
        }
    }
}

/// A report together with what produced it.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: EpisodeTrace,
    pub train: Option<TrainLog>,
    pub policy: Option<HybridPolicy>,
}

/// Environment settings a scheme runs under.
pub fn env_for(cfg: &ExperimentConfig, scheme: Scheme) -> EnvConfig {
    let mut env = cfg.env.clone();
    if scheme.is_per_slot_loop() || scheme == Scheme::RealtimeExtraction {
        env.mode = ExtractionMode::Realtime;
    }
    if scheme == Scheme::NonSemantic {
        env.sem.rho_min = 1.0;
    }
    env
}

pub fn agent_kind(scheme: Scheme) -> Option<AgentKind> {
    match scheme {
        Scheme::Pdoo | Scheme::RealtimeExtraction => Some(AgentKind::Modes),
        Scheme::AllSelection => Some(AgentKind::AllModes),
        Scheme::PlainPpo => Some(AgentKind::Direct),
        _ => None,
    }
}

/// Loop options for the per-slot schemes.
pub fn loop_options(cfg: &ExperimentConfig, scheme: Scheme) -> Option<JtacOptions<f64>> {
    let (ablation, quantize) = match scheme {
        Scheme::Alg1Greedy => (Ablation::None, false),
        Scheme::FixedPhase => (Ablation::FixedPhase, false),
        Scheme::FixedExtraction | Scheme::NonSemantic => (Ablation::FixedExtraction, false),
        Scheme::FixedDecoding => (Ablation::FixedDecoding, false),
        Scheme::QuantizedPhase => (Ablation::None, true),
        _ => return None,
    };
    Some(cfg.jtac.options(ablation, quantize))
}

/// Trains a fresh agent for a learned scheme.
pub fn train_agent(cfg: &ExperimentConfig, scheme: Scheme, seed: u64) -> Result<(Ppo, TrainLog)> {
    let kind = agent_kind(scheme)
        .ok_or_else(|| crate::error::HarnessError::Config(format!("{scheme} does not learn")))?;
    let env_cfg = env_for(cfg, scheme);
    let pc = kind.policy_config(&env_cfg, &cfg.policy);
    let mut agent = Ppo::new(pc, cfg.ppo.clone(), seed)?;
    let mut env = AgentEnv::new(env_cfg, kind)?;
    let log = agent.train(&mut env, cfg.train_steps, seed)?;
    Ok((agent, log))
}

/// Learning-curve counterpart of a uniformly random policy: actions drawn
/// uniformly from `scheme`'s agent action space for `steps` steps over the
/// same episode seeds [`train_agent`] would use.
pub fn random_policy_log(cfg: &ExperimentConfig, scheme: Scheme, seed: u64, steps: usize) -> Result<TrainLog> {
    let kind = agent_kind(scheme)
        .ok_or_else(|| crate::error::HarnessError::Config(format!("{scheme} does not learn")))?;
    let env_cfg = env_for(cfg, scheme);
    let pc = kind.policy_config(&env_cfg, &cfg.policy);
    let mut env = AgentEnv::new(env_cfg, kind)?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut log = TrainLog::default();
    env.reset(seeds.next_u64()).map_err(crate::error::HarnessError::Agent)?;
    let (mut total, mut len) = (0.0, 0usize);
    for _ in 0..steps {
        let continuous: Vec<f64> = pc.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
        let action = HybridAction {
            raw: continuous.clone(),
            continuous,
            binary: (0..pc.binary).map(|_| rng.random_bool(0.5)).collect(),
            category: (pc.categories > 0).then(|| rng.random_range(0..pc.categories)),
        };
        let tr = env.step(&action).map_err(crate::error::HarnessError::Agent)?;
        total += tr.reward;
        len += 1;
        if tr.done {
            log.episode_returns.push(total);
            log.episode_means.push(total / len as f64);
            (total, len) = (0.0, 0);
            env.reset(seeds.next_u64()).map_err(crate::error::HarnessError::Agent)?;
        }
    }
    log.steps = steps;
    Ok(log)
}

/// Runs `slots` slots, timing `decide` as the policy part of each
/// decision. Episodes restart with consecutive seeds.
pub fn evaluate_with<F>(env_cfg: EnvConfig, slots: usize, seed: u64, mut decide: F) -> Result<EpisodeTrace>
where
    F: FnMut(&SemanticNomaEnv, &Observation) -> Result<(LearnedAction, Decision)>,
{
    let mut env = SemanticNomaEnv::new(env_cfg)?;
    let mut episode = 0;
    let mut obs = env.reset(seed)?;
    let mut trace = EpisodeTrace::new();
    for _ in 0..slots {
        let started = Instant::now();
        let (learned, decision) = decide(&env, &obs)?;
        let policy_secs = started.elapsed().as_secs_f64();
        let out = env.step_with(&learned, &decision)?;
        let mut record = out.record;
        record.policy_secs = policy_secs;
        trace.push(record);
        obs = if out.done {
            episode += 1;
            env.reset(seed + episode)?
        } else {
            out.observation
        };
    }
    Ok(trace)
}

/// Deterministic evaluation of a trained policy.
pub fn evaluate_policy(
    env_cfg: EnvConfig,
    kind: AgentKind,
    policy: &HybridPolicy,
    slots: usize,
    seed: u64,
) -> Result<EpisodeTrace> {
    evaluate_with(env_cfg, slots, seed, |env, obs| {
        let a = policy.decide(obs.vector())?;
        kind.decode(env.config(), obs, &a)
    })
}

pub fn evaluate_random(env_cfg: EnvConfig, slots: usize, seed: u64) -> Result<EpisodeTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    evaluate_with(env_cfg, slots, seed, |env, _| Ok((env.random_action(&mut rng), Decision::Dispatch)))
}

pub fn evaluate_loop(env_cfg: EnvConfig, opts: JtacOptions<f64>, slots: usize, seed: u64) -> Result<EpisodeTrace> {
    let k = env_cfg.num_users();
    evaluate_with(env_cfg, slots, seed, |_, _| Ok((LearnedAction::idle(k), Decision::Jtac(opts.clone()))))
}

/// Trains (when the scheme learns) and evaluates `cfg.scheme` under
/// `seed`.
pub fn run_scheme_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let scheme = cfg.scheme;
    let env_cfg = env_for(cfg, scheme);
    let eval_seed = seed + EVAL_SEED_OFFSET;
    let (trace, train, policy) = if let Some(kind) = agent_kind(scheme) {
        let (agent, log) = train_agent(cfg, scheme, seed)?;
        let trace = evaluate_policy(env_cfg.clone(), kind, &agent.policy, cfg.eval_slots, eval_seed)?;
        (trace, Some(log), Some(agent.policy))
    } else if let Some(opts) = loop_options(cfg, scheme) {
        (evaluate_loop(env_cfg.clone(), opts, cfg.eval_slots, eval_seed)?, None, None)
    } else {
        (evaluate_random(env_cfg.clone(), cfg.eval_slots, eval_seed)?, None, None)
    };
    let report = RunReport::from_trace(scheme, seed, &env_cfg, &trace, train.as_ref());
    Ok(RunOutput {
        report,
        trace,
        train,
        policy,
    })
}

/// [`run_scheme_seed`] at the configured first seed.
pub fn run_scheme(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_scheme_seed(cfg, cfg.seed)
}

/// One run per configured seed.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    cfg.seed_list().into_iter().map(|s| run_scheme_seed(cfg, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scheme: Scheme) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default().with_scheme(scheme).with_elements(8);
        cfg.train_steps = 256;
        cfg.eval_slots = 40;
        cfg.policy.hidden = vec![16];
        cfg
    }

    #[test]
    fn every_scheme_produces_a_report() {
        for scheme in Scheme::ALL {
            let out = run_scheme(&quick(scheme)).unwrap();
            let r = &out.report;
            assert_eq!(r.scheme, scheme.name());
            assert_eq!(r.slots, 40);
            assert!(r.energy_efficiency.is_finite() && r.energy_efficiency >= 0.0, "{scheme}");
            assert_eq!(out.train.is_some(), scheme.is_learned());
            assert!(out.trace.records().iter().all(|rec| rec.raw_backlog.iter().chain(&rec.sem_backlog).all(|&b| b >= 0.0)));
        }
    }

    #[test]
    fn random_log_covers_whole_episodes() {
        let cfg = quick(Scheme::Pdoo);
        let log = random_policy_log(&cfg, Scheme::Pdoo, 3, 450).unwrap();
        assert_eq!(log.episode_means.len(), 2);
        assert!(log.trailing_mean(100).is_finite());
        assert_eq!(random_policy_log(&cfg, Scheme::Pdoo, 3, 450).unwrap().episode_means, log.episode_means);
    }

    #[test]
    fn non_semantic_never_compresses() {
        let out = run_scheme(&quick(Scheme::NonSemantic)).unwrap();
        assert!(out.trace.records().iter().all(|r| r.rho.iter().all(|&p| p == 1.0)));
    }

    #[test]
    fn runs_repeat_exactly() {
        let a = run_scheme(&quick(Scheme::Pdoo)).unwrap();
        let b = run_scheme(&quick(Scheme::Pdoo)).unwrap();
        assert_eq!(a.train, b.train);
        let strip = |t: &EpisodeTrace| t.records().iter().map(|r| (r.reward, r.rho.clone(), r.mode)).collect::<Vec<_>>();
        assert_eq!(strip(&a.trace), strip(&b.trace));
    }
}
