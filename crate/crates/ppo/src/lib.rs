//! Proximal policy optimization for hybrid action spaces.
//!
//! A policy emits a bounded continuous vector (Gaussian, squashed by a
//! sigmoid), a set of independent binary choices and one categorical choice.
//! Gradients come from a small reverse-mode tape in [`tape`]; everything runs
//! on one thread and is reproducible from a seed.

pub mod agent;
pub mod buffer;
pub mod checkpoint;
pub mod error;
pub mod nn;
pub mod optim;
pub mod policy;
pub mod tape;

pub use agent::{clipped_surrogate, HybridEnv, LossEval, Ppo, PpoConfig, TrainLog, Transition, UpdateStats};
pub use buffer::{gae, RolloutBuffer};
pub use error::{EnvFailure, PpoError, Result};
pub use policy::{ActOutput, HybridAction, HybridPolicy, PolicyConfig};
