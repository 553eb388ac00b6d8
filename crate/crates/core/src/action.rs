//! Combined per-slot control tuple.

use serde::{Deserialize, Serialize};

use crate::channel::PhaseVector;
use crate::error::{Error, Result};
use crate::noma::{DecodingOrder, TransmitProfile};
use crate::scalar::Real;

/// Which control family the per-slot optimizer refreshes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerChoice {
    Extraction,
    Beamforming,
    Decoding,
}

impl OptimizerChoice {
    pub const ALL: [OptimizerChoice; 3] = [Self::Extraction, Self::Beamforming, Self::Decoding];

    /// Mode number `m` in `1..=3`.
    pub fn index(self) -> usize {
        match self {
            Self::Extraction => 1,
            Self::Beamforming => 2,
            Self::Decoding => 3,
        }
    }

    pub fn from_index(m: usize) -> Result<Self> {
        match m {
            1 => Ok(Self::Extraction),
            2 => Ok(Self::Beamforming),
            3 => Ok(Self::Decoding),
            _ => Err(Error::Domain(format!("optimizer mode {m} not in 1..=3"))),
        }
    }
}

/// Exact optimizers or the linear-time heuristics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerProfile {
    #[default]
    Exact,
    Lightweight,
}

/// Learned part `(D, Z, psi, m)` plus optimized part `(rho, order, phases)`
/// and the powers chosen by power control.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotAction<T> {
    /// Raw bits to extract this slot.
    pub extract: Vec<T>,
    /// Semantic bits to transmit this slot.
    pub targets: Vec<T>,
    pub mode: OptimizerChoice,
    pub rho: Vec<T>,
    pub order: DecodingOrder,
    pub phases: PhaseVector<T>,
    /// Powers and scheduling flags `psi`.
    pub power: TransmitProfile<T>,
}

impl<T: Real> SlotAction<T> {
    /// Everyone scheduled, identity order, uniform phases, `rho = rho_min`.
    pub fn initial(k: usize, l: usize, rho_min: T, p_max: T) -> Self {
        Self {
            extract: vec![T::zero(); k],
            targets: vec![T::zero(); k],
            mode: OptimizerChoice::Extraction,
            rho: vec![rho_min; k],
            order: DecodingOrder::identity(k),
            phases: PhaseVector::constant(l, T::PI()),
            power: TransmitProfile::all_active(vec![p_max; k]),
        }
    }

    pub fn num_users(&self) -> usize {
        self.rho.len()
    }

    pub fn schedule(&self) -> &[bool] {
        &self.power.schedule
    }

    /// Clamps every field into its admissible range.
    pub fn sanitize(&mut self, rho_min: T, p_max: T, d_max: T) {
        let clamp = |v: T, lo: T, hi: T| if v.is_nan() { lo } else { v.max(lo).min(hi) };
        for d in &mut self.extract {
            *d = clamp(*d, T::zero(), d_max);
        }
        for z in &mut self.targets {
            *z = clamp(*z, T::zero(), d_max);
        }
        for r in &mut self.rho {
            *r = clamp(*r, rho_min, T::one());
        }
        for p in &mut self.power.power {
            *p = clamp(*p, T::zero(), p_max);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_round_trip() {
        for m in 1..=3 {
            assert_eq!(OptimizerChoice::from_index(m).unwrap().index(), m);
        }
        assert!(OptimizerChoice::from_index(0).is_err());
        assert!(OptimizerChoice::from_index(4).is_err());
    }

    #[test]
    fn sanitize_clamps() {
        let mut a = SlotAction::<f64>::initial(2, 3, 0.2, 10.0);
        a.extract = vec![-1.0, 5e3];
        a.targets = vec![f64::NAN, 10.0];
        a.rho = vec![0.0, 3.0];
        a.power.power = vec![20.0, -2.0];
        a.sanitize(0.2, 10.0, 2000.0);
        assert_eq!(a.extract, vec![0.0, 2000.0]);
        assert_eq!(a.targets, vec![0.0, 10.0]);
        assert_eq!(a.rho, vec![0.2, 1.0]);
        assert_eq!(a.power.power, vec![10.0, 0.0]);
    }
}
