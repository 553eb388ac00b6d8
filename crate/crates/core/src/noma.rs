//! Uplink NOMA with successive interference cancellation.
//!
//! An SU decoded earlier sees every later-decoded scheduled SU as
//! interference; the last one decoded is interference free. Orders are kept
//! as permutations, so the precedence matrix is always acyclic.

use num_complex::Complex;

use crate::error::{check_len, Error, Result};
use crate::params::SystemParams;
use crate::scalar::Real;

/// SIC decoding order. `rank[k]` is the position of SU `k` in
/// `sequence`, so `sequence[rank[k]] == k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DecodingOrder {
    rank: Vec<usize>,
    sequence: Vec<usize>,
}

impl DecodingOrder {
    pub fn identity(k: usize) -> Self {
        Self {
            rank: (0..k).collect(),
            sequence: (0..k).collect(),
        }
    }

    /// Builds an order from the decode sequence (first decoded first).
    pub fn from_sequence(sequence: Vec<usize>) -> Result<Self> {
        let k = sequence.len();
        let mut rank = vec![usize::MAX; k];
        for (pos, &su) in sequence.iter().enumerate() {
            if su >= k {
                return Err(Error::Index { index: su, len: k });
            }
            if rank[su] != usize::MAX {
                return Err(Error::Domain(format!("SU {su} appears twice in order")));
            }
            rank[su] = pos;
        }
        Ok(Self { rank, sequence })
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn ranks(&self) -> &[usize] {
        &self.rank
    }

    pub fn rank(&self, su: usize) -> usize {
        self.rank[su]
    }

    /// `pi[k][k'] = 1` iff `k` is decoded before `k'`.
    pub fn pi(&self, k: usize, other: usize) -> bool {
        k != other && self.rank[k] < self.rank[other]
    }

    pub fn pi_matrix(&self) -> Vec<Vec<u8>> {
        let k = self.len();
        (0..k)
            .map(|i| (0..k).map(|j| u8::from(self.pi(i, j))).collect())
            .collect()
    }
}

/// Sorts SUs by ascending priority value. Equal values fall back to SU index.
pub fn order_from_priorities<P: PartialOrd>(priorities: &[P]) -> DecodingOrder {
    let mut seq: Vec<usize> = (0..priorities.len()).collect();
    seq.sort_by(|&a, &b| {
        priorities[a]
            .partial_cmp(&priorities[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    DecodingOrder::from_sequence(seq).expect("a sorted index set is a permutation")
}

/// Per-SU transmit powers and scheduling flags.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmitProfile<T> {
    pub power: Vec<T>,
    pub schedule: Vec<bool>,
}

impl<T: Real> TransmitProfile<T> {
    pub fn all_active(power: Vec<T>) -> Self {
        let schedule = vec![true; power.len()];
        Self { power, schedule }
    }

    pub fn idle(k: usize) -> Self {
        Self {
            power: vec![T::zero(); k],
            schedule: vec![false; k],
        }
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Received power `psi_k |h_k|^2 p_k`.
    fn received(&self, gains: &[T]) -> Vec<T> {
        gains
            .iter()
            .zip(&self.power)
            .zip(&self.schedule)
            .map(|((&g, &p), &on)| if on { g * p } else { T::zero() })
            .collect()
    }

    fn validate(&self, k: usize) -> Result<()> {
        check_len("power vector", k, self.power.len())?;
        check_len("schedule vector", k, self.schedule.len())?;
        if self.power.iter().any(|p| !(*p >= T::zero())) {
            return Err(Error::Domain("transmit power must be >= 0".into()));
        }
        Ok(())
    }
}

fn check_inputs<T: Real>(
    h: &[Complex<T>],
    profile: &TransmitProfile<T>,
    sys: &SystemParams<T>,
) -> Result<Vec<T>> {
    profile.validate(h.len())?;
    if !(sys.noise_power > T::zero()) {
        return Err(Error::Domain("noise power must be > 0".into()));
    }
    Ok(h.iter().map(|z| z.norm_sqr()).collect())
}

/// Capacity in bits of SU `su` under SIC with the given order.
pub fn su_capacity<T: Real>(
    h: &[Complex<T>],
    profile: &TransmitProfile<T>,
    order: &DecodingOrder,
    sys: &SystemParams<T>,
    su: usize,
) -> Result<T> {
    let gains = check_inputs(h, profile, sys)?;
    check_len("decoding order", h.len(), order.len())?;
    if su >= h.len() {
        return Err(Error::Index {
            index: su,
            len: h.len(),
        });
    }
    let rx = profile.received(&gains);
    let interference = (0..h.len())
        .filter(|&j| order.pi(su, j))
        .fold(T::zero(), |acc, j| acc + rx[j]);
    Ok(sys.bits_per_log2() * (rx[su] / (interference + sys.noise_power)).ln_1p() / T::LN_2())
}

/// Capacities of all SUs. Same values as calling [`su_capacity`] per SU.
pub fn su_capacities<T: Real>(
    h: &[Complex<T>],
    profile: &TransmitProfile<T>,
    order: &DecodingOrder,
    sys: &SystemParams<T>,
) -> Result<Vec<T>> {
    let gains = check_inputs(h, profile, sys)?;
    check_len("decoding order", h.len(), order.len())?;
    let rx = profile.received(&gains);
    let mut out = vec![T::zero(); h.len()];
    // walk from the last decoded SU back, accumulating interference
    let mut later = T::zero();
    for &k in order.sequence().iter().rev() {
        out[k] = sys.bits_per_log2() * (rx[k] / (later + sys.noise_power)).ln_1p() / T::LN_2();
        later += rx[k];
    }
    Ok(out)
}

/// Sum capacity, independent of the decoding order.
pub fn sum_capacity<T: Real>(
    h: &[Complex<T>],
    profile: &TransmitProfile<T>,
    sys: &SystemParams<T>,
) -> Result<T> {
    let gains = check_inputs(h, profile, sys)?;
    let total = profile
        .received(&gains)
        .into_iter()
        .fold(T::zero(), |a, b| a + b);
    Ok(sys.bits_per_log2() * (total / sys.noise_power).ln_1p() / T::LN_2())
}

/// Result of SIC power control.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerControl<T> {
    pub profile: TransmitProfile<T>,
    /// Effective per-SU targets `max(target, s_min)` for scheduled SUs, 0 otherwise.
    pub targets: Vec<T>,
    pub feasible: bool,
    /// Total bits missing over all SUs whose power hit `p_max`.
    pub shortfall: T,
}

impl<T: Real> PowerControl<T> {
    pub fn sum_power(&self) -> T {
        self.profile.power.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// Minimum powers meeting every scheduled SU's target under `order`.
///
/// Powers are fixed from the last-decoded SU backwards, so each SU only has
/// to beat the interference of SUs already settled. A power above `p_max`
/// is clipped and the missing bits are reported as shortfall.
pub fn min_power_for_targets<T: Real>(
    h: &[Complex<T>],
    order: &DecodingOrder,
    targets: &[T],
    schedule: &[bool],
    sys: &SystemParams<T>,
) -> Result<PowerControl<T>> {
    let k = h.len();
    check_len("decoding order", k, order.len())?;
    check_len("targets", k, targets.len())?;
    check_len("schedule", k, schedule.len())?;
    if targets.iter().any(|t| !(*t >= T::zero())) {
        return Err(Error::Domain("targets must be >= 0".into()));
    }
    let mut power = vec![T::zero(); k];
    let mut eff = vec![T::zero(); k];
    let mut later = T::zero();
    let mut feasible = true;
    let mut shortfall = T::zero();
    // absorbs rounding when a target sits exactly at the power limit
    let p_cap = sys.p_max * (T::one() + T::epsilon().sqrt());
    for &su in order.sequence().iter().rev() {
        if !schedule[su] {
            continue;
        }
        let target = targets[su].max(sys.s_min);
        eff[su] = target;
        let gain = h[su].norm_sqr();
        let floor = later + sys.noise_power;
        let need = sys.sinr_for_bits(target) * floor / gain;
        let p = if need.is_finite() && need <= p_cap {
            need.min(sys.p_max)
        } else {
            feasible = false;
            let got = sys.bits_per_log2() * (gain * sys.p_max / floor).ln_1p() / T::LN_2();
            shortfall += (target - got).max(T::zero());
            sys.p_max
        };
        power[su] = p;
        later += gain * p;
    }
    Ok(PowerControl {
        profile: TransmitProfile {
            power,
            schedule: schedule.to_vec(),
        },
        targets: eff,
        feasible,
        shortfall,
    })
}
