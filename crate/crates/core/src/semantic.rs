//! Semantic extraction cost model, energy accounting and SU buffers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::noma::TransmitProfile;
use crate::params::SystemParams;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct SemanticParams<T> {
    /// Extraction load coefficient (cycles per load unit).
    pub a: T,
    /// Recovery load coefficient (cycles per load unit).
    pub b: T,
    pub alpha_e: T,
    pub alpha_r: T,
    /// SU compute capacity, cycles/s.
    pub f: T,
    /// AP compute capacity, cycles/s.
    pub g: T,
    pub kappa: T,
    pub rho_min: T,
    /// Bits in one load unit. `a` and `b` are quoted per Kbit by default.
    pub load_unit_bits: T,
}

impl<T: Real> Default for SemanticParams<T> {
    fn default() -> Self {
        Self {
            a: T::lit(100.0),
            b: T::lit(200.0),
            alpha_e: T::lit(4.0),
            alpha_r: T::lit(2.0),
            f: T::lit(5e8),
            g: T::lit(1e9),
            kappa: T::lit(1e-21),
            rho_min: T::lit(0.2),
            load_unit_bits: T::lit(1000.0),
        }
    }
}

impl<T: Real> SemanticParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("alpha_e", self.alpha_e),
            ("alpha_r", self.alpha_r),
            ("f", self.f),
            ("g", self.g),
            ("kappa", self.kappa),
            ("load_unit_bits", self.load_unit_bits),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) {
                return Err(Error::Config(format!("semantic {name} must be > 0")));
            }
        }
        if !(self.rho_min > T::zero() && self.rho_min <= T::one()) {
            return Err(Error::Config("rho_min must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Per-bit energy of extraction plus recovery at depth `rho`.
    pub fn energy_per_bit(&self, rho: T) -> T {
        let ext = self.f * self.f * self.a / rho.powf(self.alpha_e);
        let rec = self.g * self.g * self.b / rho.powf(self.alpha_r);
        self.kappa * (ext + rec) / self.load_unit_bits
    }
}

/// Extraction plus recovery energy for `capacity` semantic bits at depth `rho`.
pub fn semantic_energy<T: Real>(capacity: T, rho: T, params: &SemanticParams<T>) -> Result<T> {
    if !(rho >= params.rho_min) {
        return Err(Error::Domain(format!(
            "extraction depth {rho} below rho_min {}",
            params.rho_min
        )));
    }
    if !(capacity >= T::zero()) {
        return Err(Error::Domain("capacity must be >= 0".into()));
    }
    Ok(capacity * params.energy_per_bit(rho))
}

/// Slot energy: semantic processing of every SU plus `tau * p_k`.
pub fn total_energy<T: Real>(
    capacities: &[T],
    rhos: &[T],
    profile: &TransmitProfile<T>,
    params: &SemanticParams<T>,
    sys: &SystemParams<T>,
) -> Result<T> {
    let k = capacities.len();
    check_len("extraction depths", k, rhos.len())?;
    check_len("power vector", k, profile.power.len())?;
    let mut e = T::zero();
    for i in 0..k {
        if capacities[i] > T::zero() {
            e += semantic_energy(capacities[i], rhos[i], params)?;
        }
        if profile.schedule[i] {
            e += sys.slot_duration * profile.power[i];
        }
    }
    Ok(e)
}

/// Largest feasible depth: `max(min(S / l, 1), rho_min)`.
pub fn closed_form_rho<T: Real>(capacity: T, arrival: T, rho_min: T) -> T {
    if !(arrival > T::zero()) {
        return T::one();
    }
    (capacity / arrival).min(T::one()).max(rho_min)
}

/// Raw and semantic backlogs of one SU plus the last `horizon` totals.
#[derive(Clone, Debug, PartialEq)]
pub struct QueuePair<T> {
    pub raw_backlog: T,
    pub sem_backlog: T,
    pub window: VecDeque<T>,
    pub horizon: usize,
}

impl<T: Real> QueuePair<T> {
    pub fn new(horizon: usize) -> Self {
        Self {
            raw_backlog: T::zero(),
            sem_backlog: T::zero(),
            window: VecDeque::with_capacity(horizon),
            horizon: horizon.max(1),
        }
    }

    pub fn total(&self) -> T {
        self.raw_backlog + self.sem_backlog
    }

    pub fn window_mean(&self) -> T {
        if self.window.is_empty() {
            return self.total();
        }
        let s = self.window.iter().fold(T::zero(), |a, &b| a + b);
        s / T::from_usize_lossy(self.window.len())
    }

    fn with_backlogs(&self, raw: T, sem: T) -> Self {
        let mut window = self.window.clone();
        if window.len() == self.horizon {
            window.pop_front();
        }
        window.push_back(raw + sem);
        Self {
            raw_backlog: raw,
            sem_backlog: sem,
            window,
            horizon: self.horizon,
        }
    }
}

/// Single-buffer update: raw data drains at `capacity / rho` per slot.
pub fn step_realtime_queue<T: Real>(q: &QueuePair<T>, arrival: T, capacity: T, rho: T) -> QueuePair<T> {
    let raw = (q.raw_backlog + arrival - capacity / rho).max(T::zero());
    q.with_backlogs(raw, q.sem_backlog)
}

/// Bits that an extraction request of `d` can actually take this slot.
pub fn effective_extraction<T: Real>(q: &QueuePair<T>, arrival: T, d: T) -> T {
    d.max(T::zero()).min(q.raw_backlog + arrival)
}

/// Dual-buffer update with extraction size `d` at depth `rho`.
pub fn step_deferrable_queues<T: Real>(
    q: &QueuePair<T>,
    arrival: T,
    d: T,
    rho: T,
    capacity: T,
) -> QueuePair<T> {
    let d_eff = effective_extraction(q, arrival, d);
    let raw = (q.raw_backlog + arrival - d_eff).max(T::zero());
    let sem = (q.sem_backlog + rho * d_eff - capacity).max(T::zero());
    q.with_backlogs(raw, sem)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// Only the windowed excess over `b_max` is penalized.
    #[default]
    Hinge,
    /// Signed difference; rewards backlogs below `b_max`.
    Literal,
}

/// Windowed backlog penalty for one SU.
pub fn delay_window_penalty<T: Real>(q: &QueuePair<T>, b_max: T, lambda: T, kind: PenaltyKind) -> T {
    let excess = q.window_mean() - b_max;
    match kind {
        PenaltyKind::Hinge => lambda * excess.max(T::zero()),
        PenaltyKind::Literal => lambda * excess,
    }
}
