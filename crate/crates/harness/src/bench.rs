//! Per-step decision timing.

use risnoma_core::action::OptimizerProfile;
use risnoma_env::{Decision, EnvConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use risnoma_ppo::HybridPolicy;
use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::error::Result;
use crate::run::evaluate_with;
use crate::stats::std_dev;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub variant: String,
    pub elements: usize,
    pub slots: usize,
    /// Policy forward plus optimizer time per slot, seconds.
    pub mean_secs: f64,
    pub std_secs: f64,
    pub mean_policy_secs: f64,
}

/// Decision time of the same mode-selecting policy under the lightweight
/// optimizers, the exact optimizers, and with every mode run each slot.
///
/// Actions are sampled as during training, so the mode mix is the one the
/// policy explores with rather than its argmax.
pub fn bench_policy(env: &EnvConfig, policy: &HybridPolicy, slots: usize, seed: u64) -> Result<Vec<TimingRow>> {
    let variants = [
        ("lightweight", OptimizerProfile::Lightweight, false),
        ("pdoo", OptimizerProfile::Exact, false),
        ("all-selection", OptimizerProfile::Exact, true),
    ];
    let mut rows = Vec::new();
    for (name, profile, all) in variants {
        let mut cfg = env.clone();
        cfg.profile = profile;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = evaluate_with(cfg, slots, seed, |e, obs| {
            let a = policy.act(obs.vector(), false, &mut rng)?.action;
            let (learned, decision) = AgentKind::Modes.decode(e.config(), obs, &a)?;
            Ok((learned, if all { Decision::AllSelection } else { decision }))
        })?;
        let secs: Vec<f64> = trace.records().iter().map(|r| r.decision_secs()).collect();
        rows.push(TimingRow {
            variant: name.into(),
            elements: env.num_elements(),
            slots,
            mean_secs: trace.mean_decision_secs(),
            std_secs: std_dev(&secs),
            mean_policy_secs: trace.records().iter().map(|r| r.policy_secs).sum::<f64>() / slots.max(1) as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PolicySection;

    #[test]
    fn bench_reports_three_variants() {
        let mut env = EnvConfig::default();
        env.geometry.ris_elements = 10;
        let pc = AgentKind::Modes.policy_config(&env, &PolicySection::default());
        let policy = HybridPolicy::new(pc, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
        let rows = bench_policy(&env, &policy, 20, 1).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
        assert_eq!(names, ["lightweight", "pdoo", "all-selection"]);
        assert!(rows.iter().all(|r| r.mean_secs > 0.0 && r.mean_secs >= r.mean_policy_secs));
    }
}
