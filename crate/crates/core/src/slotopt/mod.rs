//! Per-slot optimizers for decoding order, RIS phases and extraction depth,
//! the alternating loop that combines them, and the single-mode dispatcher.

mod dispatch;
mod jtac;
mod order;
mod phases;

pub use dispatch::{
    all_selection, dispatch, extraction_depths, extraction_depths_at, slot_efficiency, DispatchOutcome,
    DEPTH_POWER_SCALES,
};
pub use jtac::{jtac_alternating, jtac_with, Ablation, JtacOptions, JtacOutcome};
pub use order::{
    best_order_bruteforce, heuristic_order_by_gain, penalized_order_relaxation, OrderSearch,
    RelaxationOutcome, MAX_BRUTEFORCE_USERS,
};
pub use phases::{
    phases_coordinate_ascent, phases_coordinate_ascent_with, phase_objective, PhaseAscent,
    PhaseObjective, PHASE_GRID_LEVELS,
};

use num_complex::Complex;

use crate::channel::{compose_equivalent, ChannelState, PhaseVector};
use crate::error::{check_len, Error, Result};
use crate::params::SystemParams;
use crate::scalar::Real;
use crate::semantic::SemanticParams;

/// Everything a per-slot optimizer needs besides the variables it updates.
#[derive(Clone, Debug)]
pub struct SlotProblem<'a, T> {
    pub state: &'a ChannelState<T>,
    pub sys: &'a SystemParams<T>,
    pub sem: &'a SemanticParams<T>,
    /// Bits available for extraction per SU (`l_k` in real-time mode,
    /// the effective extraction size when deferrable).
    pub arrivals: Vec<T>,
    /// Bits each SU must deliver this slot.
    pub targets: Vec<T>,
    pub schedule: Vec<bool>,
    /// Reference powers for objectives that hold power fixed.
    pub power: Vec<T>,
    /// Semantic bits each SU asks to send; drives the depth update.
    pub demand: Vec<T>,
    /// Per-SU backlog; lightweight alignment serves the largest.
    pub backlog: Vec<T>,
    /// Semantic bits already queued per SU, which need no fresh extraction.
    pub carried: Vec<T>,
}

impl<'a, T: Real> SlotProblem<'a, T> {
    /// All SUs scheduled, reference powers at `p_max`, arrivals, demand and
    /// backlog equal to `targets`, nothing carried over.
    pub fn new(
        state: &'a ChannelState<T>,
        sys: &'a SystemParams<T>,
        sem: &'a SemanticParams<T>,
        targets: Vec<T>,
    ) -> Self {
        let k = targets.len();
        Self {
            state,
            sys,
            sem,
            arrivals: targets.clone(),
            demand: targets.clone(),
            backlog: targets.clone(),
            targets,
            schedule: vec![true; k],
            power: vec![sys.p_max; k],
            carried: vec![T::zero(); k],
        }
    }

    pub fn with_arrivals(mut self, arrivals: Vec<T>) -> Self {
        self.arrivals = arrivals;
        self
    }

    pub fn with_schedule(mut self, schedule: Vec<bool>) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_power(mut self, power: Vec<T>) -> Self {
        self.power = power;
        self
    }

    pub fn with_demand(mut self, demand: Vec<T>) -> Self {
        self.demand = demand;
        self
    }

    pub fn with_backlog(mut self, backlog: Vec<T>) -> Self {
        self.backlog = backlog;
        self
    }

    pub fn with_carried(mut self, carried: Vec<T>) -> Self {
        self.carried = carried;
        self
    }

    pub fn num_users(&self) -> usize {
        self.state.num_users()
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.num_users()).filter(|&k| self.schedule[k]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_users();
        check_len("targets", k, self.targets.len())?;
        check_len("arrivals", k, self.arrivals.len())?;
        check_len("schedule", k, self.schedule.len())?;
        check_len("reference powers", k, self.power.len())?;
        check_len("demand", k, self.demand.len())?;
        check_len("carried bits", k, self.carried.len())?;
        check_len("backlog", k, self.backlog.len())?;
        if self.targets.iter().any(|t| !(*t >= T::zero())) {
            return Err(Error::Domain("targets must be >= 0".into()));
        }
        if !self.schedule.iter().any(|&s| s) {
            return Err(Error::Domain("no SU scheduled".into()));
        }
        Ok(())
    }

    /// Equivalent channel under `phases`.
    pub fn equivalent(&self, phases: &PhaseVector<T>) -> Result<Vec<Complex<T>>> {
        compose_equivalent(self.state, phases)
    }
}
