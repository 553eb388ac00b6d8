//! Simulation and per-slot optimization core for RIS-assisted semantic NOMA
//! uplink.
//!
//! The numerical modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

pub mod action;
pub mod channel;
pub mod error;
pub mod noma;
pub mod params;
pub mod scalar;
pub mod semantic;
pub mod slotopt;

pub use error::{Error, Result};
pub use scalar::Real;
pub use slotopt::SlotProblem;

pub type Geometry64 = channel::Geometry<f64>;
pub type FadingParams64 = channel::FadingParams<f64>;
pub type ChannelState64 = channel::ChannelState<f64>;
pub type PhaseVector64 = channel::PhaseVector<f64>;
pub type TransmitProfile64 = noma::TransmitProfile<f64>;
pub type SystemParams64 = params::SystemParams<f64>;
pub type SemanticParams64 = semantic::SemanticParams<f64>;
pub type QueuePair64 = semantic::QueuePair<f64>;
pub type SlotAction64 = action::SlotAction<f64>;
