//! Rician block-fading links on a fixed 2-D layout and the RIS-equivalent
//! channel seen by each semantic user.
//!
//! Every link is a large-scale log-distance gain times a unit-mean-power
//! Rician coefficient. The RIS cascade for user `k` and element `l` is
//! `h_ap_ris[l] * h_ris_su[k][l]`, and the equivalent channel under a phase
//! vector is `sum_l cascade[k][l] e^{j phi_l} + h_direct[k]`.
//!
//! Draws are ordered so that an `L`-element state is the prefix of any
//! larger state sampled with the same seed: all direct links first, then
//! element by element (`h_ap_ris[l]`, then `h_ris_su[k][l]` for every `k`).

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

/// AP, RIS and SU positions in meters, plus the RIS element count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry<T> {
    pub ap: [T; 2],
    pub ris: [T; 2],
    pub ris_elements: usize,
    pub sus: Vec<[T; 2]>,
}

fn dist<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl<T: Real> Geometry<T> {
    pub fn new(ap: [T; 2], ris: [T; 2], ris_elements: usize, sus: Vec<[T; 2]>) -> Result<Self> {
        let g = Self {
            ap,
            ris,
            ris_elements,
            sus,
        };
        g.validate()?;
        Ok(g)
    }

    /// AP at the origin, RIS at (5, 0), `k` users drawn uniformly in a disc
    /// of `radius` meters around (7, 3).
    pub fn scattered(k: usize, ris_elements: usize, radius: T, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = [T::lit(7.0), T::lit(3.0)];
        let sus = (0..k)
            .map(|_| {
                let r = radius * T::lit(rng.random::<f64>()).sqrt();
                let a = T::two_pi() * T::lit(rng.random::<f64>());
                [center[0] + r * a.cos(), center[1] + r * a.sin()]
            })
            .collect();
        Self::new(
            [T::zero(), T::zero()],
            [T::lit(5.0), T::zero()],
            ris_elements,
            sus,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.sus.is_empty() {
            return Err(Error::InvalidGeometry("no semantic users".into()));
        }
        if self.ris_elements == 0 {
            return Err(Error::InvalidGeometry("RIS needs at least one element".into()));
        }
        let finite = |p: [T; 2]| p[0].is_finite() && p[1].is_finite();
        if !finite(self.ap) || !finite(self.ris) || !self.sus.iter().all(|&p| finite(p)) {
            return Err(Error::InvalidGeometry("non-finite coordinate".into()));
        }
        if dist(self.ap, self.ris) <= T::zero() {
            return Err(Error::InvalidGeometry("AP and RIS coincide".into()));
        }
        for (k, &su) in self.sus.iter().enumerate() {
            if dist(self.ap, su) <= T::zero() {
                return Err(Error::InvalidGeometry(format!("SU {k} coincides with the AP")));
            }
            if dist(self.ris, su) <= T::zero() {
                return Err(Error::InvalidGeometry(format!("SU {k} coincides with the RIS")));
            }
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.sus.len()
    }
}

/// Large-scale and Rician parameters shared by all links.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct FadingParams<T> {
    /// Path gain at 1 m, in dB.
    pub pathloss_at_ref: T,
    pub exponent_direct: T,
    pub exponent_ap_ris: T,
    pub exponent_ris_su: T,
    /// Linear Rician factor of the AP-SU links. `0` is Rayleigh.
    pub rician_k_direct: T,
    /// Linear Rician factor of both RIS links.
    pub rician_k_ris: T,
    /// Carrier wavelength in meters; sets the deterministic LoS phases.
    pub wavelength: T,
    /// AR(1) coefficient of the scattered component between slots.
    /// `0` gives independent block fading.
    pub temporal_correlation: T,
}

impl<T: Real> Default for FadingParams<T> {
    fn default() -> Self {
        Self {
            pathloss_at_ref: T::lit(-30.0),
            exponent_direct: T::lit(3.5),
            exponent_ap_ris: T::lit(2.2),
            exponent_ris_su: T::lit(2.2),
            rician_k_direct: T::zero(),
            rician_k_ris: T::lit(3.0),
            wavelength: T::lit(0.1),
            temporal_correlation: T::zero(),
        }
    }
}

impl<T: Real> FadingParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("exponent_direct", self.exponent_direct),
            ("exponent_ap_ris", self.exponent_ap_ris),
            ("exponent_ris_su", self.exponent_ris_su),
            ("wavelength", self.wavelength),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        if !(self.rician_k_direct >= T::zero()) || !(self.rician_k_ris >= T::zero()) {
            return Err(Error::Config("Rician factors must be >= 0".into()));
        }
        let c = self.temporal_correlation;
        if !(c >= T::zero() && c < T::one()) {
            return Err(Error::Config("temporal_correlation must be in [0, 1)".into()));
        }
        Ok(())
    }

    fn amplitude(&self, exponent: T, d: T) -> T {
        let db = self.pathloss_at_ref - T::lit(10.0) * exponent * d.log10();
        T::from_db(db).sqrt()
    }
}

/// Per-slot channel coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelState<T> {
    pub h_direct: Vec<Complex<T>>,
    pub h_ap_ris: Vec<Complex<T>>,
    pub h_ris_su: Vec<Vec<Complex<T>>>,
    /// `cascade[k][l] = h_ap_ris[l] * h_ris_su[k][l]`
    pub cascade: Vec<Vec<Complex<T>>>,
}

impl<T: Real> ChannelState<T> {
    pub fn from_links(
        h_direct: Vec<Complex<T>>,
        h_ap_ris: Vec<Complex<T>>,
        h_ris_su: Vec<Vec<Complex<T>>>,
    ) -> Result<Self> {
        check_len("RIS-SU links", h_direct.len(), h_ris_su.len())?;
        for row in &h_ris_su {
            check_len("RIS-SU elements", h_ap_ris.len(), row.len())?;
        }
        let cascade = h_ris_su
            .iter()
            .map(|row| row.iter().zip(&h_ap_ris).map(|(r, a)| a * r).collect())
            .collect();
        Ok(Self {
            h_direct,
            h_ap_ris,
            h_ris_su,
            cascade,
        })
    }

    /// A state with a unit AP-RIS link, so the cascade equals `cascade`.
    pub fn from_cascade(h_direct: Vec<Complex<T>>, cascade: Vec<Vec<Complex<T>>>) -> Result<Self> {
        let l = cascade.first().map_or(0, Vec::len);
        Self::from_links(h_direct, vec![Complex::new(T::one(), T::zero()); l], cascade)
    }

    pub fn num_users(&self) -> usize {
        self.h_direct.len()
    }

    pub fn num_elements(&self) -> usize {
        self.h_ap_ris.len()
    }
}

/// RIS reflection phases in radians, stored wrapped into `[0, 2pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseVector<T>(Vec<T>);

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_phase<T: Real>(phi: T) -> T {
    let tau = T::two_pi();
    let w = phi % tau;
    let w = if w < T::zero() { w + tau } else { w };
    // `w + tau` can round up to exactly tau for tiny negative inputs
    if w >= tau {
        T::zero()
    } else {
        w
    }
}

impl<T: Real> PhaseVector<T> {
    pub fn new(phases: Vec<T>) -> Self {
        Self(phases.into_iter().map(wrap_phase).collect())
    }

    pub fn constant(len: usize, phi: T) -> Self {
        Self::new(vec![phi; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn set(&mut self, l: usize, phi: T) {
        self.0[l] = wrap_phase(phi);
    }

    /// Unit-modulus reflection coefficients `e^{j phi_l}`.
    pub fn lifted(&self) -> Vec<Complex<T>> {
        self.0.iter().map(|&p| Complex::from_polar(T::one(), p)).collect()
    }

    /// Rounds every phase to the nearest of `2^bits` uniform levels.
    pub fn quantized(&self, bits: u32) -> Self {
        let levels = T::from_usize_lossy(1usize << bits);
        let step = T::two_pi() / levels;
        Self::new(self.0.iter().map(|&p| (p / step).round() * step).collect())
    }
}

/// Equivalent channel `h_k` of every user under `phases`.
pub fn compose_equivalent<T: Real>(
    state: &ChannelState<T>,
    phases: &PhaseVector<T>,
) -> Result<Vec<Complex<T>>> {
    check_len("phase vector", state.num_elements(), phases.len())?;
    let theta = phases.lifted();
    Ok(state
        .cascade
        .iter()
        .zip(&state.h_direct)
        .map(|(row, &d)| row.iter().zip(&theta).fold(d, |acc, (c, t)| acc + c * t))
        .collect())
}

/// `|h_k|^2` for each user.
pub fn channel_gains<T: Real>(h: &[Complex<T>]) -> Vec<T> {
    h.iter().map(|z| z.norm_sqr()).collect()
}

/// Co-phases every reflected path of `target` with its direct path.
pub fn aligned_phases<T: Real>(state: &ChannelState<T>, target: usize) -> Result<PhaseVector<T>> {
    if target >= state.num_users() {
        return Err(Error::Index {
            index: target,
            len: state.num_users(),
        });
    }
    let arg = |z: Complex<T>| if z.norm_sqr() > T::zero() { z.arg() } else { T::zero() };
    let reference = arg(state.h_direct[target]);
    Ok(PhaseVector::new(
        state.cascade[target]
            .iter()
            .map(|&c| reference - arg(c))
            .collect(),
    ))
}

fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex::new(T::lit(re * s), T::lit(im * s))
}

/// One link: large-scale amplitude, LoS phasor, and its Rician split.
#[derive(Clone, Debug)]
struct Link<T> {
    amplitude: T,
    los: Complex<T>,
    los_weight: T,
    scatter_weight: T,
}

impl<T: Real> Link<T> {
    fn new(amplitude: T, los_phase: T, k_factor: T) -> Self {
        let (los_weight, scatter_weight) = if k_factor.is_infinite() {
            (T::one(), T::zero())
        } else {
            let kp1 = k_factor + T::one();
            ((k_factor / kp1).sqrt(), (T::one() / kp1).sqrt())
        };
        Self {
            amplitude,
            los: Complex::from_polar(T::one(), los_phase),
            los_weight,
            scatter_weight,
        }
    }

    fn coefficient(&self, scatter: Complex<T>) -> Complex<T> {
        (self.los * self.los_weight + scatter * self.scatter_weight) * self.amplitude
    }
}

/// Time-evolving channel: fixed geometry, AR(1) scatter between slots.
#[derive(Clone, Debug)]
pub struct ChannelProcess<T> {
    direct: Vec<Link<T>>,
    ap_ris: Vec<Link<T>>,
    ris_su: Vec<Vec<Link<T>>>,
    correlation: T,
    // scatter state in draw order: direct[k], then (ap_ris[l], ris_su[0..K][l]) per l
    scatter: Option<Vec<Complex<T>>>,
}

impl<T: Real> ChannelProcess<T> {
    pub fn new(geometry: &Geometry<T>, fading: &FadingParams<T>) -> Result<Self> {
        geometry.validate()?;
        fading.validate()?;
        let lambda = fading.wavelength;
        let spacing = lambda / T::lit(2.0);
        let wave = T::two_pi() / lambda;
        let l = geometry.ris_elements;

        let direct = geometry
            .sus
            .iter()
            .map(|&su| {
                let d = dist(geometry.ap, su);
                Link::new(
                    fading.amplitude(fading.exponent_direct, d),
                    -wave * d,
                    fading.rician_k_direct,
                )
            })
            .collect();

        // RIS elements form a uniform linear array along the x axis.
        let steering = |from: [T; 2], to: [T; 2], idx: usize| {
            let d = dist(from, to);
            let cos_angle = (to[0] - from[0]) / d;
            -wave * (d + T::from_usize_lossy(idx) * spacing * cos_angle)
        };
        let d_ar = dist(geometry.ap, geometry.ris);
        let amp_ar = fading.amplitude(fading.exponent_ap_ris, d_ar);
        let ap_ris = (0..l)
            .map(|i| Link::new(amp_ar, steering(geometry.ap, geometry.ris, i), fading.rician_k_ris))
            .collect();
        let ris_su = geometry
            .sus
            .iter()
            .map(|&su| {
                let amp = fading.amplitude(fading.exponent_ris_su, dist(geometry.ris, su));
                (0..l)
                    .map(|i| Link::new(amp, steering(geometry.ris, su, i), fading.rician_k_ris))
                    .collect()
            })
            .collect();

        Ok(Self {
            direct,
            ap_ris,
            ris_su,
            correlation: fading.temporal_correlation,
            scatter: None,
        })
    }

    fn num_draws(&self) -> usize {
        self.direct.len() + self.ap_ris.len() * (1 + self.direct.len())
    }

    /// Draws the next slot's channel state.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> ChannelState<T> {
        let n = self.num_draws();
        let fresh: Vec<Complex<T>> = (0..n).map(|_| complex_normal(rng)).collect();
        let scatter = match self.scatter.take() {
            Some(prev) if self.correlation > T::zero() => {
                let c = self.correlation;
                let innov = (T::one() - c * c).sqrt();
                prev.iter()
                    .zip(&fresh)
                    .map(|(p, f)| p * c + f * innov)
                    .collect()
            }
            _ => fresh,
        };

        let k = self.direct.len();
        let l = self.ap_ris.len();
        let h_direct = (0..k).map(|i| self.direct[i].coefficient(scatter[i])).collect();
        let mut h_ap_ris = Vec::with_capacity(l);
        let mut h_ris_su = vec![Vec::with_capacity(l); k];
        for e in 0..l {
            let base = k + e * (1 + k);
            h_ap_ris.push(self.ap_ris[e].coefficient(scatter[base]));
            for (u, row) in h_ris_su.iter_mut().enumerate() {
                row.push(self.ris_su[u][e].coefficient(scatter[base + 1 + u]));
            }
        }
        self.scatter = Some(scatter);
        ChannelState::from_links(h_direct, h_ap_ris, h_ris_su)
            .expect("process dimensions are consistent")
    }
}

/// Independent channel draw for one slot.
pub fn sample_channels<T: Real>(
    geometry: &Geometry<T>,
    fading: &FadingParams<T>,
    rng_seed: u64,
) -> Result<ChannelState<T>> {
    let mut process = ChannelProcess::new(geometry, fading)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(process.sample(&mut rng))
}
