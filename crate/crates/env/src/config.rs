use risnoma_core::action::OptimizerProfile;
use risnoma_core::channel::{FadingParams, Geometry};
use risnoma_core::params::SystemParams;
use risnoma_core::semantic::{PenaltyKind, SemanticParams};
use serde::{Deserialize, Serialize};

use crate::error::{EnvError, Result};

/// How raw data becomes semantic traffic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMode {
    /// Every SU extracts and sends everything it holds each slot.
    Realtime,
    /// Extraction size, transmit size and scheduling are chosen per slot,
    /// with a semantic buffer in between.
    #[default]
    Deferrable,
}

/// Default number of SUs.
pub const DEFAULT_USERS: usize = 3;
/// Default RIS size.
pub const DEFAULT_ELEMENTS: usize = 70;
/// Seed that places the default SUs.
pub const DEFAULT_LAYOUT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub geometry: Geometry<f64>,
    pub fading: FadingParams<f64>,
    pub sys: SystemParams<f64>,
    pub sem: SemanticParams<f64>,
    /// Mean raw arrival per SU and slot, bits.
    pub arrival_mean: Vec<f64>,
    /// Arrival standard deviation as a fraction of the mean.
    pub arrival_std_frac: f64,
    /// Windowed backlog limit, bits.
    pub b_max: f64,
    pub penalty_weight: f64,
    pub penalty_kind: PenaltyKind,
    /// Slots in the backlog window.
    pub window: usize,
    pub episode_len: usize,
    /// Upper bound on `D` and `Z` as a multiple of the SU's mean arrival.
    pub d_max_factor: f64,
    pub mode: ExtractionMode,
    pub profile: OptimizerProfile,
    /// Convergence threshold and round limit for all-modes selection.
    pub all_selection_eps: f64,
    pub all_selection_rounds: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::scattered(DEFAULT_USERS, DEFAULT_ELEMENTS, 1.0, DEFAULT_LAYOUT_SEED)
                .expect("default layout is valid"),
            fading: FadingParams::default(),
            sys: SystemParams::default(),
            sem: SemanticParams::default(),
            arrival_mean: vec![1000.0; DEFAULT_USERS],
            arrival_std_frac: 0.2,
            b_max: 3000.0,
            penalty_weight: 1.0,
            penalty_kind: PenaltyKind::Literal,
            window: 20,
            episode_len: 200,
            d_max_factor: 2.0,
            mode: ExtractionMode::Deferrable,
            profile: OptimizerProfile::Exact,
            all_selection_eps: 1e-3,
            all_selection_rounds: 5,
        }
    }
}

impl EnvConfig {
    pub fn num_users(&self) -> usize {
        self.geometry.num_users()
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.ris_elements
    }

    /// Observation length: gain, raw and semantic backlog and last arrival
    /// per SU, plus the slot phase.
    pub fn obs_dim(&self) -> usize {
        4 * self.num_users() + 1
    }

    /// Per-SU bound on `D` and `Z`.
    pub fn d_max(&self) -> Vec<f64> {
        self.arrival_mean.iter().map(|m| self.d_max_factor * m).collect()
    }

    /// Same layout with every mean arrival scaled by `factor`.
    pub fn with_arrival_scale(mut self, factor: f64) -> Self {
        for m in &mut self.arrival_mean {
            *m *= factor;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.fading.validate()?;
        self.sys.validate()?;
        self.sem.validate()?;
        let k = self.num_users();
        if self.arrival_mean.len() != k {
            return Err(EnvError::Config(format!(
                "arrival_mean has {} entries for {k} SUs",
                self.arrival_mean.len()
            )));
        }
        if self.arrival_mean.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(EnvError::Config("arrival means must be finite and >= 0".into()));
        }
        let positive = [
            ("arrival_std_frac", self.arrival_std_frac + 1.0),
            ("b_max", self.b_max),
            ("d_max_factor", self.d_max_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::Config(format!("{name} out of range")));
            }
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(EnvError::Config("penalty_weight must be >= 0".into()));
        }
        if self.window == 0 || self.episode_len == 0 {
            return Err(EnvError::Config("window and episode_len must be >= 1".into()));
        }
        Ok(())
    }
}
