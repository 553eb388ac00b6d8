//! RIS phase optimization by cyclic per-element grid search.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::SlotProblem;
use crate::channel::{wrap_phase, PhaseVector};
use crate::error::{check_len, Result};
use crate::noma::DecodingOrder;
use crate::scalar::Real;

/// Levels of the per-element phase grid.
pub const PHASE_GRID_LEVELS: usize = 256;

/// What the phase update maximizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseObjective {
    /// Sum over scheduled SUs of the SINR margin at fixed reference powers:
    /// `|h_k|^2 p_k / omega_k - (interference_k + sigma^2)`.
    #[default]
    Slack,
    /// Negative sum of the minimum powers that meet every target under SIC.
    SumPower,
}

#[derive(Clone, Debug)]
pub struct PhaseAscent<T> {
    pub phases: PhaseVector<T>,
    pub objective: T,
    /// Objective after every single-element update, starting from `init`.
    pub trace: Vec<T>,
}

struct Prepared<T> {
    active: Vec<usize>,
    /// Slack weights, or received powers for the sum-power objective.
    coeff: Vec<T>,
    offset: T,
}

fn prepare<T: Real>(
    problem: &SlotProblem<'_, T>,
    order: &DecodingOrder,
    objective: PhaseObjective,
) -> Prepared<T> {
    let sys = problem.sys;
    let k = problem.num_users();
    let omega: Vec<T> = (0..k)
        .map(|i| sys.sinr_for_bits(problem.targets[i].max(sys.s_min)))
        .collect();
    let active = problem.active();
    let mut coeff = vec![T::zero(); k];
    let mut offset = T::zero();
    match objective {
        PhaseObjective::Slack => {
            // sum_k [g_k p_k / w_k - sum_{later k'} g_k' p_k' - sigma^2]
            // regroups to sum_k g_k p_k (1/w_k - #scheduled SUs decoded before k)
            let mut before = T::zero();
            for &s in order.sequence() {
                if problem.schedule[s] {
                    coeff[s] = problem.power[s] * (T::one() / omega[s] - before);
                    before += T::one();
                    offset -= sys.noise_power;
                }
            }
        }
        PhaseObjective::SumPower => {
            // received powers of the SIC chain do not depend on the gains
            let mut later = T::zero();
            for &s in order.sequence().iter().rev() {
                if problem.schedule[s] {
                    coeff[s] = omega[s] * (later + sys.noise_power);
                    later += coeff[s];
                }
            }
        }
    }
    Prepared {
        active,
        coeff,
        offset,
    }
}

fn value<T: Real>(prep: &Prepared<T>, h: &[Complex<T>], objective: PhaseObjective) -> T {
    match objective {
        PhaseObjective::Slack => prep
            .active
            .iter()
            .fold(prep.offset, |acc, &k| acc + prep.coeff[k] * h[k].norm_sqr()),
        PhaseObjective::SumPower => prep
            .active
            .iter()
            .fold(T::zero(), |acc, &k| acc - prep.coeff[k] / h[k].norm_sqr()),
    }
}

/// Objective value of `phases` under `order`.
pub fn phase_objective<T: Real>(
    problem: &SlotProblem<'_, T>,
    order: &DecodingOrder,
    phases: &PhaseVector<T>,
    objective: PhaseObjective,
) -> Result<T> {
    let prep = prepare(problem, order, objective);
    let h = problem.equivalent(phases)?;
    Ok(value(&prep, &h, objective))
}

/// Coordinate ascent on the slack objective.
pub fn phases_coordinate_ascent<T: Real>(
    problem: &SlotProblem<'_, T>,
    order: &DecodingOrder,
    init: &PhaseVector<T>,
    sweeps: usize,
) -> Result<PhaseAscent<T>> {
    phases_coordinate_ascent_with(problem, order, init, sweeps, PhaseObjective::Slack)
}

/// Cycles through the elements `sweeps` times, moving each phase to the
/// best of [`PHASE_GRID_LEVELS`] uniform levels with all other phases held.
/// The current phase is kept unless a grid level is strictly better, so the
/// objective never decreases. Stops early after a sweep with no change.
pub fn phases_coordinate_ascent_with<T: Real>(
    problem: &SlotProblem<'_, T>,
    order: &DecodingOrder,
    init: &PhaseVector<T>,
    sweeps: usize,
    objective: PhaseObjective,
) -> Result<PhaseAscent<T>> {
    problem.validate()?;
    check_len("decoding order", problem.num_users(), order.len())?;
    let prep = prepare(problem, order, objective);
    let cascade = &problem.state.cascade;
    let l_count = problem.state.num_elements();
    let step = T::two_pi() / T::from_usize_lossy(PHASE_GRID_LEVELS);
    let grid: Vec<Complex<T>> = (0..PHASE_GRID_LEVELS)
        .map(|i| Complex::from_polar(T::one(), step * T::from_usize_lossy(i)))
        .collect();

    let mut phases = init.clone();
    let mut h = problem.equivalent(&phases)?;
    let mut trace = vec![value(&prep, &h, objective)];

    for _ in 0..sweeps.max(1) {
        // refresh to keep incremental updates from drifting
        h = problem.equivalent(&phases)?;
        let mut moved = false;
        for l in 0..l_count {
            let cur = Complex::from_polar(T::one(), phases.as_slice()[l]);
            let rest: Vec<Complex<T>> = prep
                .active
                .iter()
                .map(|&k| h[k] - cascade[k][l] * cur)
                .collect();
            let pick = match objective {
                PhaseObjective::Slack => {
                    // objective is const + 2 Re(e^{j phi} z)
                    let z = prep
                        .active
                        .iter()
                        .zip(&rest)
                        .fold(Complex::new(T::zero(), T::zero()), |acc, (&k, c)| {
                            acc + c.conj() * cascade[k][l] * prep.coeff[k]
                        });
                    let idx = (wrap_phase(-z.arg()) / step).round().to_usize().unwrap_or(0)
                        % PHASE_GRID_LEVELS;
                    let gain = |t: Complex<T>| (t * z).re;
                    (gain(grid[idx]) > gain(cur)).then_some(idx)
                }
                PhaseObjective::SumPower => {
                    let cost = |t: Complex<T>| {
                        prep.active.iter().zip(&rest).fold(T::zero(), |acc, (&k, c)| {
                            acc + prep.coeff[k] / (c + cascade[k][l] * t).norm_sqr()
                        })
                    };
                    let (idx, best) = grid
                        .iter()
                        .enumerate()
                        .map(|(i, &t)| (i, cost(t)))
                        .fold((0, T::infinity()), |b, c| if c.1 < b.1 { c } else { b });
                    (best < cost(cur)).then_some(idx)
                }
            };
            if let Some(idx) = pick {
                moved = true;
                phases.set(l, step * T::from_usize_lossy(idx));
                for (&k, c) in prep.active.iter().zip(&rest) {
                    h[k] = c + cascade[k][l] * grid[idx];
                }
            }
            trace.push(value(&prep, &h, objective));
        }
        if !moved {
            break;
        }
    }
    let objective = value(&prep, &problem.equivalent(&phases)?, objective);
    Ok(PhaseAscent {
        phases,
        objective,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{aligned_phases, sample_channels, FadingParams, Geometry};
    use crate::params::SystemParams;
    use crate::semantic::SemanticParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geometry(k: usize, l: usize, seed: u64) -> Geometry<f64> {
        Geometry::scattered(k, l, 1.0, seed).unwrap()
    }

    fn random_init(rng: &mut ChaCha8Rng, l: usize) -> PhaseVector<f64> {
        PhaseVector::new((0..l).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect())
    }

    #[test]
    fn single_user_reaches_cophasing() {
        let (sys, sem) = (SystemParams::default(), SemanticParams::default());
        for seed in 0..10 {
            let st = sample_channels(&geometry(1, 32, seed), &FadingParams::default(), seed).unwrap();
            let p = SlotProblem::new(&st, &sys, &sem, vec![500.0]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out =
                phases_coordinate_ascent(&p, &DecodingOrder::identity(1), &random_init(&mut rng, 32), 30).unwrap();
            let got = p.equivalent(&out.phases).unwrap()[0].norm();
            let best = p.equivalent(&aligned_phases(&st, 0).unwrap()).unwrap()[0].norm();
            assert!(got >= best * 0.999, "{got} vs {best}");
        }
    }

    #[test]
    fn objective_never_decreases() {
        let (sys, sem) = (SystemParams::default(), SemanticParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..50 {
            let st = sample_channels(&geometry(3, 16, i), &FadingParams::default(), i).unwrap();
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(100.0..800.0)).collect();
            let p = SlotProblem::new(&st, &sys, &sem, t);
            let order = DecodingOrder::from_sequence(vec![2, 0, 1]).unwrap();
            let init = random_init(&mut rng, 16);
            for obj in [PhaseObjective::Slack, PhaseObjective::SumPower] {
                let out = phases_coordinate_ascent_with(&p, &order, &init, 3, obj).unwrap();
                for w in out.trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-12 * w[0].abs(), "{obj:?}: {} -> {}", w[0], w[1]);
                }
            }
        }
    }

    fn grid_optimum(p: &SlotProblem<'_, f64>, order: &DecodingOrder, obj: PhaseObjective) -> f64 {
        let l = p.state.num_elements();
        let step = std::f64::consts::TAU / 16.0;
        let rot: Vec<Complex<f64>> = (0..16).map(|i| Complex::from_polar(1.0, i as f64 * step)).collect();
        let prep = prepare(p, order, obj);
        let mut idx = vec![0usize; l];
        let mut best = f64::NEG_INFINITY;
        loop {
            let h: Vec<Complex<f64>> = (0..p.num_users())
                .map(|k| (0..l).fold(p.state.h_direct[k], |acc, e| acc + p.state.cascade[k][e] * rot[idx[e]]))
                .collect();
            best = best.max(value(&prep, &h, obj));
            let mut pos = 0;
            while pos < l {
                idx[pos] += 1;
                if idx[pos] < 16 {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == l {
                return best;
            }
        }
    }

    #[test]
    fn multi_user_close_to_exhaustive_grid() {
        let (sys, sem) = (SystemParams::default(), SemanticParams::default());
        for seed in 0..2 {
            let st = sample_channels(&geometry(2, 6, seed), &FadingParams::default(), seed).unwrap();
            let p = SlotProblem::new(&st, &sys, &sem, vec![300.0, 500.0]);
            let order = DecodingOrder::identity(2);
            let opt = grid_optimum(&p, &order, PhaseObjective::Slack);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let best = (0..8)
                .map(|_| phases_coordinate_ascent(&p, &order, &random_init(&mut rng, 6), 10).unwrap().objective)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best >= opt - 0.02 * opt.abs(), "{best} vs grid {opt}");
        }
    }
}
