use std::path::Path;

use risnoma_core::action::OptimizerProfile;
use risnoma_core::channel::Geometry;
use risnoma_core::slotopt::{Ablation, JtacOptions};
use risnoma_core::Real;
use risnoma_env::{EnvConfig, DEFAULT_LAYOUT_SEED};
use risnoma_ppo::PpoConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::scheme::Scheme;

/// Network widths and initial exploration of the learned schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySection {
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            init_log_std: 0.0,
        }
    }
}

/// Per-slot alternating loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JtacSection {
    pub eps: f64,
    pub max_iters: usize,
    pub sweeps: usize,
    /// Phase resolution of the quantized-phase scheme.
    pub quantize_bits: u32,
}

impl Default for JtacSection {
    fn default() -> Self {
        let d = JtacOptions::<f64>::default();
        Self {
            eps: d.eps,
            max_iters: d.max_iters,
            sweeps: d.sweeps,
            quantize_bits: 2,
        }
    }
}

impl JtacSection {
    pub fn options(&self, ablation: Ablation, quantize: bool) -> JtacOptions<f64> {
        JtacOptions {
            eps: self.eps,
            max_iters: self.max_iters,
            sweeps: self.sweeps,
            ablation,
            quantize_bits: quantize.then_some(self.quantize_bits),
            ..JtacOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub scheme: Scheme,
    /// First seed; seed `i` of a multi-seed run is `seed + i`.
    pub seed: u64,
    pub seeds: usize,
    pub train_steps: usize,
    /// Slots in the evaluation episode after training.
    pub eval_slots: usize,
    /// Radius of the disc the SUs are placed in when the layout is redrawn.
    pub su_radius: f64,
    pub layout_seed: u64,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub policy: PolicySection,
    pub jtac: JtacSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            scheme: Scheme::Pdoo,
            seed: 42,
            seeds: 5,
            train_steps: 30_000,
            eval_slots: 200,
            su_radius: 1.0,
            layout_seed: DEFAULT_LAYOUT_SEED,
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            policy: PolicySection::default(),
            jtac: JtacSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        if self.seeds == 0 || self.eval_slots == 0 {
            return Err(HarnessError::Config("seeds and eval_slots must be >= 1".into()));
        }
        if !(self.su_radius >= 0.0 && self.su_radius.is_finite()) {
            return Err(HarnessError::Config("su_radius must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed + i).collect()
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_profile(mut self, profile: OptimizerProfile) -> Self {
        self.env.profile = profile;
        self
    }

    pub fn with_elements(mut self, l: usize) -> Self {
        self.env.geometry.ris_elements = l;
        self
    }

    /// Redraws the SU layout for `k` users; every SU keeps the first SU's
    /// mean arrival.
    pub fn with_users(mut self, k: usize) -> Result<Self> {
        let l = self.env.num_elements();
        let mut g = Geometry::scattered(k, l, self.su_radius, self.layout_seed)?;
        g.ap = self.env.geometry.ap;
        g.ris = self.env.geometry.ris;
        self.env.geometry = g;
        let mean = self.env.arrival_mean.first().copied().unwrap_or(1000.0);
        self.env.arrival_mean = vec![mean; k];
        Ok(self)
    }

    pub fn with_ris_x(mut self, x: f64) -> Self {
        self.env.geometry.ris[0] = x;
        self
    }

    pub fn with_arrival_scale(mut self, factor: f64) -> Self {
        self.env = self.env.with_arrival_scale(factor);
        self
    }

    pub fn with_noise_dbm(mut self, dbm: f64) -> Self {
        self.env.sys.noise_power = f64::from_dbm(dbm);
        self
    }

    /// Nearly deterministic channels (scatter amplitude cut tenfold) with
    /// strongly fluctuating arrivals.
    pub fn stable_channel_case(mut self) -> Self {
        self.env.fading.rician_k_ris = 100.0 * (self.env.fading.rician_k_ris + 1.0);
        self.env.fading.rician_k_direct = 100.0 * (self.env.fading.rician_k_direct + 1.0);
        self.env.arrival_std_frac = 0.6;
        self
    }

    /// Default fading with strongly fluctuating arrivals.
    pub fn fluctuating_case(mut self) -> Self {
        self.env.arrival_std_frac = 0.6;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "scheme = \"random\"\nseed = 7\n[env]\nb_max = 5000.0\n[env.sys]\nbandwidth_hz = 200.0\n[ppo]\nepochs = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.scheme, Scheme::Random);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.env.b_max, 5000.0);
        assert_eq!(cfg.env.sys.bandwidth_hz, 200.0);
        assert_eq!(cfg.env.sys.p_max, ExperimentConfig::default().env.sys.p_max);
        assert_eq!(cfg.ppo.epochs, 2);
        assert_eq!(cfg.train_steps, 30_000);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("scheme = \"nope\"").is_err());
        assert!(ExperimentConfig::from_toml("seeds = 0").is_err());
        assert!(ExperimentConfig::from_toml("[env]\nb_max = -1.0").is_err());
    }

    #[test]
    fn user_sweep_redraws_layout() {
        let cfg = ExperimentConfig::default().with_users(5).unwrap();
        assert_eq!(cfg.env.num_users(), 5);
        assert_eq!(cfg.env.arrival_mean.len(), 5);
        assert_eq!(cfg.env.obs_dim(), 21);
        cfg.validate().unwrap();
    }

    #[test]
    fn noise_is_set_in_dbm() {
        let cfg = ExperimentConfig::default().with_noise_dbm(-80.0);
        assert!((cfg.env.sys.noise_power - 1e-11).abs() < 1e-24);
    }
}
