//! Slot-level environment for RIS-assisted semantic NOMA uplink.
//!
//! Each slot the policy picks extraction and transmit sizes, scheduling
//! flags and one optimizer mode; the chosen optimizer refreshes its family
//! of variables, power control serves the targets, and the raw and semantic
//! queues advance. The reward is recovered raw bits per joule minus a
//! windowed backlog penalty.

mod config;
mod error;
mod sim;
mod trace;

pub use config::{EnvConfig, ExtractionMode, DEFAULT_ELEMENTS, DEFAULT_LAYOUT_SEED, DEFAULT_USERS};
pub use error::{EnvError, Result};
pub use sim::{
    run_policy, Decision, DirectControls, LearnedAction, Observation, Policy, SemanticNomaEnv, StepOutcome,
};
pub use trace::{EpisodeTrace, SlotRecord};
