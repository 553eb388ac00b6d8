//! Radio constants shared by the capacity, power-control and energy code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct SystemParams<T> {
    /// Receiver noise power in watts.
    pub noise_power: T,
    /// Slot duration in seconds.
    pub slot_duration: T,
    /// Channel bandwidth in Hz. Capacities are `tau * B * log2(1 + SINR)` bits.
    pub bandwidth_hz: T,
    /// Per-SU transmit power ceiling in watts.
    pub p_max: T,
    /// Minimum decodable payload per scheduled SU, in bits.
    pub s_min: T,
}

impl<T: Real> Default for SystemParams<T> {
    fn default() -> Self {
        Self {
            noise_power: T::from_dbm(T::lit(-90.0)),
            slot_duration: T::one(),
            bandwidth_hz: T::lit(DEFAULT_BANDWIDTH_HZ),
            p_max: T::from_dbm(T::lit(40.0)),
            s_min: T::lit(100.0),
        }
    }
}

/// Default bandwidth. With 1 Kbit arrivals per slot this keeps the required
/// SINR in a range where transmit and semantic energy are comparable.
pub const DEFAULT_BANDWIDTH_HZ: f64 = 100.0;

impl<T: Real> SystemParams<T> {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("noise_power", self.noise_power),
            ("slot_duration", self.slot_duration),
            ("bandwidth_hz", self.bandwidth_hz),
            ("p_max", self.p_max),
        ];
        for (name, v) in checks {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite and > 0")));
            }
        }
        if !(self.s_min >= T::zero()) {
            return Err(Error::Domain("s_min must be >= 0".into()));
        }
        Ok(())
    }

    /// Bits per slot per unit of `log2(1 + SINR)`.
    pub fn bits_per_log2(&self) -> T {
        self.slot_duration * self.bandwidth_hz
    }

    /// SINR needed to carry `bits` in one slot.
    pub fn sinr_for_bits(&self, bits: T) -> T {
        (bits / self.bits_per_log2()).exp2() - T::one()
    }
}
