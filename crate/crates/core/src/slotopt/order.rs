//! Decoding-order selection: exhaustive search, descending-gain heuristic,
//! and a penalized continuous relaxation of the precedence matrix.

use itertools::Itertools;

use super::SlotProblem;
use crate::channel::PhaseVector;
use crate::error::{Error, Result};
use crate::noma::{min_power_for_targets, DecodingOrder, PowerControl};
use crate::scalar::Real;

/// Largest active set [`best_order_bruteforce`] accepts.
pub const MAX_BRUTEFORCE_USERS: usize = 8;

/// An order together with the power control it induces.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderSearch<T> {
    pub order: DecodingOrder,
    pub power: PowerControl<T>,
}

impl<T: Real> OrderSearch<T> {
    pub fn feasible(&self) -> bool {
        self.power.feasible
    }

    /// Feasible first, then fewer missing bits, then lower sum power.
    fn beats(&self, other: &Self) -> bool {
        let a = &self.power;
        let b = &other.power;
        if a.feasible != b.feasible {
            return a.feasible;
        }
        if !a.feasible && a.shortfall != b.shortfall {
            return a.shortfall < b.shortfall;
        }
        a.sum_power() < b.sum_power()
    }
}

fn full_sequence(active_perm: impl IntoIterator<Item = usize>, schedule: &[bool]) -> Vec<usize> {
    let mut seq: Vec<usize> = active_perm.into_iter().collect();
    seq.extend((0..schedule.len()).filter(|&k| !schedule[k]));
    seq
}

fn evaluate<T: Real>(
    problem: &SlotProblem<'_, T>,
    h: &[num_complex::Complex<T>],
    order: DecodingOrder,
) -> Result<OrderSearch<T>> {
    let power = min_power_for_targets(h, &order, &problem.targets, &problem.schedule, problem.sys)?;
    Ok(OrderSearch { order, power })
}

/// Exhaustive search over orders of the scheduled SUs for minimum sum power.
///
/// Unscheduled SUs are appended after the active ones in index order. Ties
/// keep the lexicographically first permutation.
pub fn best_order_bruteforce<T: Real>(
    problem: &SlotProblem<'_, T>,
    phases: &PhaseVector<T>,
) -> Result<OrderSearch<T>> {
    problem.validate()?;
    let active = problem.active();
    if active.len() > MAX_BRUTEFORCE_USERS {
        return Err(Error::Domain(format!(
            "brute force limited to {MAX_BRUTEFORCE_USERS} active SUs, got {}",
            active.len()
        )));
    }
    let h = problem.equivalent(phases)?;
    let mut best: Option<OrderSearch<T>> = None;
    for perm in active.iter().copied().permutations(active.len()) {
        let order = DecodingOrder::from_sequence(full_sequence(perm, &problem.schedule))?;
        let cand = evaluate(problem, &h, order)?;
        if best.as_ref().is_none_or(|b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Decodes scheduled SUs in descending order of `|h_k|^2`; ties by index.
pub fn heuristic_order_by_gain<T: Real>(
    problem: &SlotProblem<'_, T>,
    phases: &PhaseVector<T>,
) -> Result<OrderSearch<T>> {
    problem.validate()?;
    let h = problem.equivalent(phases)?;
    let mut active = problem.active();
    active.sort_by(|&a, &b| {
        h[b].norm_sqr()
            .partial_cmp(&h[a].norm_sqr())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let order = DecodingOrder::from_sequence(full_sequence(active, &problem.schedule))?;
    evaluate(problem, &h, order)
}

/// Output of [`penalized_order_relaxation`].
#[derive(Clone, Debug)]
pub struct RelaxationOutcome<T> {
    pub search: OrderSearch<T>,
    /// False when the rounded matrix was not a valid order and the gain
    /// heuristic was used instead.
    pub converged: bool,
    /// Binary-violation plus pair-sum penalty at the end of each stage.
    pub stage_penalties: Vec<T>,
    /// Final relaxed precedence matrix over the active SUs.
    pub pi: Vec<Vec<T>>,
}

/// `sum pi - pi^2` and `sum |pi + pi^T - 1|` over off-diagonal entries.
fn penalties<T: Real>(pi: &[Vec<T>]) -> (T, T) {
    let n = pi.len();
    let (mut e1, mut e2) = (T::zero(), T::zero());
    for i in 0..n {
        for j in 0..n {
            if i != j {
                e1 += pi[i][j] - pi[i][j] * pi[i][j];
                e2 += (pi[i][j] + pi[j][i] - T::one()).abs();
            }
        }
    }
    (e1, e2)
}

/// Projected-gradient ascent on the penalized precedence relaxation.
///
/// With powers held at the problem's reference values, the tolerable extra
/// interference of SU `k` is `mu_k = chi_k - sigma^2 - sum_k' pi_kk' r_k'`,
/// where `r` is received power and `chi_k = r_k / omega_k`. The ascent
/// maximizes `sum mu_k` minus a hinge on negative `mu_k`, minus
/// `zeta * (eps1 + eps2)`; `eps1` is the binary penalty linearized at the
/// current iterate and `eps2` the pair-sum violation. The iterate keeps
/// `pi_kk' + pi_k'k = 1` by construction, so `eps2` stays at zero and is
/// reported only as a check. `zeta` follows `zeta_schedule` (scaled to the
/// objective) with `steps` iterations per stage, and step sizes shrink with
/// the stage index. The result is rounded and turned into an order by row
/// sums.
pub fn penalized_order_relaxation<T: Real>(
    problem: &SlotProblem<'_, T>,
    phases: &PhaseVector<T>,
    zeta_schedule: &[T],
    steps: usize,
) -> Result<RelaxationOutcome<T>> {
    problem.validate()?;
    if zeta_schedule.is_empty() || zeta_schedule.iter().any(|z| !(*z > T::zero())) {
        return Err(Error::Domain("zeta schedule must be non-empty and positive".into()));
    }
    let h = problem.equivalent(phases)?;
    let active = problem.active();
    let n = active.len();
    let sys = problem.sys;

    let rx: Vec<T> = active
        .iter()
        .map(|&k| h[k].norm_sqr() * problem.power[k])
        .collect();
    let scale = rx.iter().fold(sys.noise_power, |a, &b| a.max(b));
    let r: Vec<T> = rx.iter().map(|&v| v / scale).collect();
    let base: Vec<T> = active
        .iter()
        .zip(&r)
        .map(|(&k, &rk)| {
            let omega = sys.sinr_for_bits(problem.targets[k].max(sys.s_min));
            rk / omega - sys.noise_power / scale
        })
        .collect();

    let half = T::lit(0.5);
    let mut pi = vec![vec![half; n]; n];
    for (i, row) in pi.iter_mut().enumerate() {
        row[i] = T::zero();
    }
    let mut stage_penalties = Vec::with_capacity(zeta_schedule.len());
    let two = T::lit(2.0);
    let step0 = T::lit(0.05);

    for (stage, &zeta) in zeta_schedule.iter().enumerate() {
        let step_base = step0 / ((T::one() + zeta) * T::from_usize_lossy(stage + 1));
        for t in 0..steps {
            let step = step_base / (T::one() + T::from_usize_lossy(t) / T::lit(20.0));
            let mu: Vec<T> = (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| j != i)
                        .fold(base[i], |acc, j| acc - pi[i][j] * r[j])
                })
                .collect();
            let hinge: Vec<T> = mu.iter().map(|&m| if m < T::zero() { two } else { T::one() }).collect();
            // each pair is one variable x = pi_ij with pi_ji = 1 - x
            for i in 0..n {
                for j in (i + 1)..n {
                    let x = pi[i][j];
                    let grad = r[i] * hinge[j] - r[j] * hinge[i] - two * zeta * (T::one() - two * x);
                    let x = (x + step * grad).max(T::zero()).min(T::one());
                    pi[i][j] = x;
                    pi[j][i] = T::one() - x;
                }
            }
        }
        let (e1, e2) = penalties(&pi);
        stage_penalties.push(e1 + e2);
    }

    // round, then require a consistent tournament
    let rounded: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i != j && pi[i][j] > half).collect())
        .collect();
    let consistent = (0..n).all(|i| (0..n).all(|j| i == j || rounded[i][j] != rounded[j][i]));
    let wins: Vec<usize> = rounded.iter().map(|row| row.iter().filter(|&&b| b).count()).collect();
    let mut local: Vec<usize> = (0..n).collect();
    local.sort_by(|&a, &b| wins[b].cmp(&wins[a]).then(a.cmp(&b)));
    // an acyclic tournament has win counts n-1, n-2, ..., 0
    let acyclic = local.iter().enumerate().all(|(pos, &i)| wins[i] == n - 1 - pos);

    if consistent && acyclic {
        let seq = full_sequence(local.into_iter().map(|i| active[i]), &problem.schedule);
        let search = evaluate(problem, &h, DecodingOrder::from_sequence(seq)?)?;
        Ok(RelaxationOutcome {
            search,
            converged: true,
            stage_penalties,
            pi,
        })
    } else {
        log_fallback(&stage_penalties);
        Ok(RelaxationOutcome {
            search: heuristic_order_by_gain(problem, phases)?,
            converged: false,
            stage_penalties,
            pi,
        })
    }
}

fn log_fallback<T: Real>(stage_penalties: &[T]) {
    if cfg!(debug_assertions) {
        eprintln!(
            "order relaxation did not round to a valid order (final penalty {}); using gain heuristic",
            stage_penalties.last().map_or(f64::NAN, |p| p.as_f64())
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelState, PhaseVector};
    use crate::noma::sum_capacity;
    use crate::params::SystemParams;
    use crate::semantic::SemanticParams;
    use num_complex::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sys() -> SystemParams<f64> {
        SystemParams {
            noise_power: 1.0,
            slot_duration: 1.0,
            bandwidth_hz: 1.0,
            p_max: 1e4,
            s_min: 0.0,
        }
    }

    /// Direct-only state with the given equivalent channels.
    fn state(h: Vec<Complex<f64>>) -> ChannelState<f64> {
        let k = h.len();
        ChannelState::from_cascade(h, vec![vec![Complex::new(0.0, 0.0)]; k]).unwrap()
    }

    fn zero_phase() -> PhaseVector<f64> {
        PhaseVector::constant(1, 0.0)
    }

    fn random_h(rng: &mut ChaCha8Rng, k: usize) -> Vec<Complex<f64>> {
        (0..k)
            .map(|_| Complex::from_polar(rng.random_range(0.1..3.0), rng.random_range(0.0..6.28)))
            .collect()
    }

    #[test]
    fn single_user_identity() {
        let st = state(vec![Complex::new(1.0, 0.0)]);
        let (s, m) = (sys(), SemanticParams::default());
        let p = SlotProblem::new(&st, &s, &m, vec![1.0]);
        let out = best_order_bruteforce(&p, &zero_phase()).unwrap();
        assert_eq!(out.order.sequence(), &[0]);
    }

    #[test]
    fn two_users_stronger_first() {
        let st = state(vec![Complex::new(2.0, 0.0), Complex::new(1.0, 0.0)]);
        let (s, m) = (sys(), SemanticParams::default());
        let p = SlotProblem::new(&st, &s, &m, vec![1.0, 1.0]);
        let out = best_order_bruteforce(&p, &zero_phase()).unwrap();
        assert_eq!(out.order.sequence(), &[0, 1]);
        // enumeration of both orders by hand
        let h = p.equivalent(&zero_phase()).unwrap();
        let p01 = min_power_for_targets(&h, &DecodingOrder::identity(2), &[1.0, 1.0], &[true; 2], &s)
            .unwrap()
            .sum_power();
        let p10 = min_power_for_targets(
            &h,
            &DecodingOrder::from_sequence(vec![1, 0]).unwrap(),
            &[1.0, 1.0],
            &[true; 2],
            &s,
        )
        .unwrap()
        .sum_power();
        assert!(p01 < p10);
        assert_eq!(out.power.sum_power(), p01);
    }

    #[test]
    fn bruteforce_dominates_every_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (s, m) = (sys(), SemanticParams::default());
        for _ in 0..20 {
            let st = state(random_h(&mut rng, 4));
            let t: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..2.0)).collect();
            let p = SlotProblem::new(&st, &s, &m, t.clone());
            let best = best_order_bruteforce(&p, &zero_phase()).unwrap();
            let h = p.equivalent(&zero_phase()).unwrap();
            for perm in (0..4).permutations(4) {
                let o = DecodingOrder::from_sequence(perm).unwrap();
                let pc = min_power_for_targets(&h, &o, &t, &[true; 4], &s).unwrap();
                if pc.feasible {
                    assert!(best.power.sum_power() <= pc.sum_power());
                }
            }
        }
    }

    #[test]
    fn all_infeasible_reports_least_violating() {
        let st = state(vec![Complex::new(0.01, 0.0), Complex::new(0.02, 0.0)]);
        let s = SystemParams { p_max: 1.0, ..sys() };
        let m = SemanticParams::default();
        let p = SlotProblem::new(&st, &s, &m, vec![5.0, 5.0]);
        let out = best_order_bruteforce(&p, &zero_phase()).unwrap();
        assert!(!out.feasible());
        assert!(out.power.shortfall > 0.0);
    }

    #[test]
    fn too_many_users_rejected() {
        let st = state(vec![Complex::new(1.0, 0.0); 9]);
        let (s, m) = (sys(), SemanticParams::default());
        let p = SlotProblem::new(&st, &s, &m, vec![1.0; 9]);
        assert!(best_order_bruteforce(&p, &zero_phase()).is_err());
    }

    #[test]
    fn unscheduled_users_go_last() {
        let st = state(vec![Complex::new(1.0, 0.0), Complex::new(3.0, 0.0), Complex::new(2.0, 0.0)]);
        let (s, m) = (sys(), SemanticParams::default());
        let p = SlotProblem::new(&st, &s, &m, vec![1.0; 3]).with_schedule(vec![true, false, true]);
        let out = best_order_bruteforce(&p, &zero_phase()).unwrap();
        assert_eq!(out.order.sequence(), &[2, 0, 1]);
        assert_eq!(out.power.profile.power[1], 0.0);
    }

    #[test]
    fn heuristic_sorts_by_gain() {
        let st = state(vec![Complex::new(2.0, 0.0), Complex::new(1.0, 0.0), Complex::new(3.0, 0.0)]);
        let (s, m) = (sys(), SemanticParams::default());
        let p = SlotProblem::new(&st, &s, &m, vec![1.0; 3]);
        let out = heuristic_order_by_gain(&p, &zero_phase()).unwrap();
        assert_eq!(out.order.sequence(), &[2, 0, 1]);
        // common scaling leaves the permutation unchanged
        let st2 = state(vec![Complex::new(20.0, 0.0), Complex::new(10.0, 0.0), Complex::new(30.0, 0.0)]);
        let p2 = SlotProblem::new(&st2, &s, &m, vec![1.0; 3]);
        assert_eq!(heuristic_order_by_gain(&p2, &zero_phase()).unwrap().order, out.order);
    }

    #[test]
    fn heuristic_matches_bruteforce_equal_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (s, m) = (sys(), SemanticParams::default());
        let mut checked = 0;
        while checked < 1000 {
            let st = state(random_h(&mut rng, 3));
            let t = rng.random_range(0.1..2.0);
            let p = SlotProblem::new(&st, &s, &m, vec![t; 3]);
            let bf = best_order_bruteforce(&p, &zero_phase()).unwrap();
            if !bf.feasible() {
                continue;
            }
            let hv = heuristic_order_by_gain(&p, &zero_phase()).unwrap();
            let (a, b) = (hv.power.sum_power(), bf.power.sum_power());
            assert!((a - b).abs() <= 1e-9 * b, "heuristic {a} vs optimum {b}");
            checked += 1;
        }
    }

    #[test]
    fn taylor_bound_majorizes() {
        for i in 0..=100 {
            for j in 0..=100 {
                let (p, p0) = (i as f64 / 100.0, j as f64 / 100.0);
                assert!(p + p0 * p0 - 2.0 * p * p0 >= p - p * p - 1e-15);
            }
        }
    }

    fn relaxation_instance(rng: &mut ChaCha8Rng) -> (ChannelState<f64>, Vec<f64>) {
        let st = state(random_h(rng, 3));
        let base = rng.random_range(0.2..1.5);
        let t = (0..3).map(|_| base * rng.random_range(0.8..1.25)).collect();
        (st, t)
    }

    #[test]
    fn relaxation_penalty_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (s, m) = (sys(), SemanticParams::default());
        for _ in 0..30 {
            let (st, t) = relaxation_instance(&mut rng);
            let p = SlotProblem::new(&st, &s, &m, t);
            let out = penalized_order_relaxation(&p, &zero_phase(), &[1.0, 10.0, 100.0, 1000.0], 200).unwrap();
            for w in out.stage_penalties.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", out.stage_penalties);
            }
        }
    }

    #[test]
    fn relaxation_agrees_with_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (s, m) = (sys(), SemanticParams::default());
        let (mut hits, mut total) = (0, 0);
        while total < 200 {
            let (st, t) = relaxation_instance(&mut rng);
            let p = SlotProblem::new(&st, &s, &m, t);
            let bf = best_order_bruteforce(&p, &zero_phase()).unwrap();
            if !bf.feasible() {
                continue;
            }
            let out = penalized_order_relaxation(&p, &zero_phase(), &[1.0, 10.0, 100.0, 1000.0], 200).unwrap();
            total += 1;
            if out.search.order == bf.order {
                hits += 1;
            }
        }
        assert!(hits * 100 >= 80 * total, "{hits}/{total}");
    }

    #[test]
    fn order_does_not_change_sum_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let (s, m) = (sys(), SemanticParams::default());
        let st = state(random_h(&mut rng, 3));
        let p = SlotProblem::new(&st, &s, &m, vec![1.0; 3]);
        let bf = best_order_bruteforce(&p, &zero_phase()).unwrap();
        let h = p.equivalent(&zero_phase()).unwrap();
        let total = sum_capacity(&h, &bf.power.profile, &s).unwrap();
        assert!((total - 3.0).abs() < 1e-9);
    }
}
