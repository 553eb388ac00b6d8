//! Single-mode optimizer dispatch and the all-modes alternating baseline.

use super::order::{best_order_bruteforce, heuristic_order_by_gain};
use super::phases::{phases_coordinate_ascent_with, PhaseObjective};
use super::SlotProblem;
use crate::action::{OptimizerChoice, OptimizerProfile, SlotAction};
use crate::channel::{aligned_phases, PhaseVector};
use crate::error::{check_len, Result};
use crate::noma::{min_power_for_targets, su_capacities, DecodingOrder, TransmitProfile};
use crate::scalar::Real;
use crate::semantic::{closed_form_rho, total_energy};

/// Coordinate-ascent sweeps used by the exact beamforming mode.
const EXACT_SWEEPS: usize = 3;

#[derive(Clone, Debug)]
pub struct DispatchOutcome<T> {
    pub action: SlotAction<T>,
    pub feasible: bool,
    pub shortfall: T,
}

fn backlog_leader<T: Real>(problem: &SlotProblem<'_, T>) -> Option<usize> {
    problem
        .active()
        .into_iter()
        .fold(None, |best: Option<usize>, k| match best {
            Some(b) if problem.backlog[b] >= problem.backlog[k] => Some(b),
            _ => Some(k),
        })
}

/// Power levels, as fractions of `p_max`, whose reach the depth update
/// tries: half-decade steps from `p_max` down to `1e-6 p_max`.
pub const DEPTH_POWER_SCALES: usize = 13;

/// Depth update along `order` for SUs allowed up to `cap` watts: walking
/// back from the last-decoded SU, each scheduled SU asks for
/// `min(demand, reach) - carried` fresh semantic bits, where `reach` is
/// what it can carry at `cap` over the interference of the SUs already
/// settled, and takes the closed-form depth for that payload out of its
/// `arrivals`. Its minimum power for the resulting load is then fixed
/// before moving on. SUs with no arrivals keep `rho`.
pub fn extraction_depths_at<T: Real>(
    problem: &SlotProblem<'_, T>,
    order: &DecodingOrder,
    phases: &PhaseVector<T>,
    rho: &[T],
    cap: T,
) -> Result<Vec<T>> {
    let sys = problem.sys;
    check_len("extraction depths", problem.num_users(), rho.len())?;
    let h = problem.equivalent(phases)?;
    let mut out = rho.to_vec();
    let mut later = T::zero();
    for &s in order.sequence().iter().rev() {
        if !problem.schedule[s] {
            continue;
        }
        let gain = h[s].norm_sqr();
        let floor = later + sys.noise_power;
        let reach = sys.bits_per_log2() * (gain * cap / floor).ln_1p() / T::LN_2();
        let want = problem.demand[s].min(reach);
        if problem.arrivals[s] > T::zero() {
            let fresh = (want - problem.carried[s]).max(T::zero());
            out[s] = closed_form_rho(fresh, problem.arrivals[s], problem.sem.rho_min);
        }
        let load = want.min(problem.carried[s] + out[s] * problem.arrivals[s]).max(sys.s_min);
        let p = (sys.sinr_for_bits(load) * floor / gain).min(sys.p_max);
        later += gain * p;
    }
    Ok(out)
}

/// Recovered raw bits per joule when each scheduled SU sends
/// `min(demand, carried + rho * arrivals)` at minimum power, SUs below
/// `S_min` staying idle. `None` when the loads cannot be served.
fn depth_efficiency<T: Real>(
    problem: &SlotProblem<'_, T>,
    order: &DecodingOrder,
    h: &[num_complex::Complex<T>],
    rho: &[T],
) -> Result<Option<T>> {
    let k = problem.num_users();
    let mut loads = vec![T::zero(); k];
    let mut sched = vec![false; k];
    for i in 0..k {
        let t = problem.demand[i].min(problem.carried[i] + rho[i] * problem.arrivals[i]);
        if problem.schedule[i] && t >= problem.sys.s_min {
            loads[i] = t;
            sched[i] = true;
        }
    }
    if !sched.iter().any(|&s| s) {
        return Ok(Some(T::zero()));
    }
    let pc = min_power_for_targets(h, order, &loads, &sched, problem.sys)?;
    if !pc.feasible {
        return Ok(None);
    }
    let caps = su_capacities(h, &pc.profile, order, problem.sys)?;
    let caps: Vec<T> = (0..k).map(|i| if sched[i] { caps[i].min(loads[i]) } else { T::zero() }).collect();
    let energy = total_energy(&caps, rho, &pc.profile, problem.sem, problem.sys)?;
    let recovered = caps.iter().zip(rho).fold(T::zero(), |acc, (&c, &r)| acc + c / r);
    Ok(Some(if energy > T::zero() { recovered / energy } else { T::zero() }))
}

/// Extraction-depth update: the closed-form depths of
/// [`extraction_depths_at`] for a ladder of power caps, keeping the set with
/// the highest recovered bits per joule. The `p_max` set is the fallback
/// when no cap is servable.
pub fn extraction_depths<T: Real>(
    problem: &SlotProblem<'_, T>,
    order: &DecodingOrder,
    phases: &PhaseVector<T>,
    rho: &[T],
) -> Result<Vec<T>> {
    let h = problem.equivalent(phases)?;
    let top = extraction_depths_at(problem, order, phases, rho, problem.sys.p_max)?;
    let mut best: Option<(T, Vec<T>)> = depth_efficiency(problem, order, &h, &top)?.map(|e| (e, top.clone()));
    let mut cap = problem.sys.p_max;
    let step = T::lit(10f64.sqrt());
    for _ in 1..DEPTH_POWER_SCALES {
        cap /= step;
        let cand = extraction_depths_at(problem, order, phases, rho, cap)?;
        if let Some(eta) = depth_efficiency(problem, order, &h, &cand)? {
            if best.as_ref().is_none_or(|(b, _)| eta > *b) {
                best = Some((eta, cand));
            }
        }
    }
    Ok(best.map_or(top, |(_, r)| r))
}

/// Refreshes one control family, then recomputes powers for the targets.
///
/// `problem.targets` are the bits each scheduled SU must send and drive
/// the phase and order updates; the extraction mode works from
/// `problem.demand`, `problem.carried` and `problem.arrivals` (see
/// [`extraction_depths`]). Lightweight alignment serves the scheduled SU
/// with the largest `problem.backlog`, ties to the lowest index.
pub fn dispatch<T: Real>(
    choice: OptimizerChoice,
    problem: &SlotProblem<'_, T>,
    current: &SlotAction<T>,
    profile: OptimizerProfile,
) -> Result<DispatchOutcome<T>> {
    let k = problem.num_users();
    check_len("current action", k, current.num_users())?;
    let mut action = current.clone();
    action.mode = choice;
    action.power.schedule = problem.schedule.clone();
    if !problem.schedule.iter().any(|&s| s) {
        action.power = TransmitProfile::idle(k);
        return Ok(DispatchOutcome {
            action,
            feasible: true,
            shortfall: T::zero(),
        });
    }
    problem.validate()?;

    match choice {
        OptimizerChoice::Extraction => {
            action.rho = extraction_depths(problem, &action.order, &action.phases, &action.rho)?;
        }
        OptimizerChoice::Beamforming => match profile {
            OptimizerProfile::Exact => {
                action.phases = phases_coordinate_ascent_with(
                    problem,
                    &action.order,
                    &current.phases,
                    EXACT_SWEEPS,
                    PhaseObjective::SumPower,
                )?
                .phases;
            }
            OptimizerProfile::Lightweight => {
                if let Some(target) = backlog_leader(problem) {
                    action.phases = aligned_phases(problem.state, target)?;
                }
            }
        },
        OptimizerChoice::Decoding => {
            action.order = match profile {
                OptimizerProfile::Exact => best_order_bruteforce(problem, &action.phases)?.order,
                OptimizerProfile::Lightweight => heuristic_order_by_gain(problem, &action.phases)?.order,
            };
        }
    }

    let h = problem.equivalent(&action.phases)?;
    let pc = min_power_for_targets(&h, &action.order, &problem.targets, &problem.schedule, problem.sys)?;
    action.power = pc.profile;
    Ok(DispatchOutcome {
        action,
        feasible: pc.feasible,
        shortfall: pc.shortfall,
    })
}

/// Recovered raw bits per joule, `sum_k S_k / rho_k / E_o`, or 0 when no
/// energy is spent. Also returns the per-SU capacities and the energy.
pub fn slot_efficiency<T: Real>(problem: &SlotProblem<'_, T>, action: &SlotAction<T>) -> Result<(T, Vec<T>, T)> {
    let h = problem.equivalent(&action.phases)?;
    let caps = su_capacities(&h, &action.power, &action.order, problem.sys)?;
    let energy = total_energy(&caps, &action.rho, &action.power, problem.sem, problem.sys)?;
    let recovered = caps
        .iter()
        .zip(&action.rho)
        .fold(T::zero(), |acc, (&s, &r)| acc + s / r);
    let eta = if energy > T::zero() { recovered / energy } else { T::zero() };
    Ok((eta, caps, energy))
}

/// Runs extraction, beamforming and decoding modes in turn, keeping the
/// most efficient action, until a full round gains no more than `eps`.
pub fn all_selection<T: Real>(
    problem: &SlotProblem<'_, T>,
    current: &SlotAction<T>,
    profile: OptimizerProfile,
    eps: T,
    max_rounds: usize,
) -> Result<DispatchOutcome<T>> {
    let mut state = dispatch(OptimizerChoice::Extraction, problem, current, profile)?;
    let mut best = state.clone();
    let mut best_eta = slot_efficiency(problem, &best.action)?.0;
    for _ in 0..max_rounds.max(1) {
        let start = best_eta;
        for choice in OptimizerChoice::ALL {
            state = dispatch(choice, problem, &state.action, profile)?;
            let eta = slot_efficiency(problem, &state.action)?.0;
            if eta > best_eta {
                best_eta = eta;
                best = state.clone();
            }
        }
        if best_eta - start <= eps {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, FadingParams, Geometry, ChannelState};
    use crate::params::SystemParams;
    use crate::semantic::SemanticParams;
    use std::time::Instant;

    fn parts(k: usize, l: usize, seed: u64) -> (ChannelState<f64>, SystemParams<f64>, SemanticParams<f64>) {
        let g = Geometry::scattered(k, l, 1.0, seed).unwrap();
        (
            sample_channels(&g, &FadingParams::default(), seed).unwrap(),
            SystemParams::default(),
            SemanticParams::default(),
        )
    }

    #[test]
    fn extraction_mode_leaves_other_families() {
        let (st, sys, sem) = parts(3, 20, 1);
        let p = SlotProblem::new(&st, &sys, &sem, vec![300.0, 400.0, 500.0]).with_arrivals(vec![1000.0; 3]);
        let cur = SlotAction::initial(3, 20, 0.2, sys.p_max);
        let out = dispatch(OptimizerChoice::Extraction, &p, &cur, OptimizerProfile::Exact).unwrap();
        assert_eq!(out.action.phases, cur.phases);
        assert_eq!(out.action.order, cur.order);
        let full = extraction_depths_at(&p, &cur.order, &cur.phases, &cur.rho, sys.p_max).unwrap();
        assert_eq!(full, vec![0.3, 0.4, 0.5]);
        assert!(out.action.rho.iter().zip(&full).all(|(r, f)| *r >= sem.rho_min && r <= f));
    }

    #[test]
    fn depths_fit_what_power_control_can_serve() {
        for seed in 0..20 {
            let (st, sys, sem) = parts(3, 20, 100 + seed);
            let p = SlotProblem::new(&st, &sys, &sem, vec![50_000.0; 3]);
            let cur = SlotAction::initial(3, 20, 0.2, sys.p_max);
            let rho = extraction_depths_at(&p, &cur.order, &cur.phases, &cur.rho, sys.p_max).unwrap();
            let t: Vec<f64> = rho.iter().map(|r| r * 50_000.0).collect();
            let h = p.equivalent(&cur.phases).unwrap();
            let pc = min_power_for_targets(&h, &cur.order, &t, &p.schedule, &sys).unwrap();
            // only SUs pinned at rho_min may still fall short
            for k in 0..3 {
                if rho[k] > sem.rho_min {
                    assert!(pc.profile.power[k] <= sys.p_max * (1.0 + 1e-9));
                }
            }
            if rho.iter().all(|&r| r > sem.rho_min) {
                assert!(pc.feasible, "seed {seed}: {rho:?}");
            }
        }
    }

    #[test]
    fn carried_bits_reduce_fresh_extraction() {
        let (st, sys, sem) = parts(2, 10, 7);
        let cur = SlotAction::initial(2, 10, 0.2, sys.p_max);
        let base = SlotProblem::new(&st, &sys, &sem, vec![400.0, 400.0]).with_arrivals(vec![1000.0; 2]);
        let fresh = extraction_depths_at(&base, &cur.order, &cur.phases, &cur.rho, sys.p_max).unwrap();
        assert_eq!(fresh, vec![0.4, 0.4]);
        let carried = base.clone().with_carried(vec![100.0, 400.0]);
        let rho = extraction_depths_at(&carried, &cur.order, &cur.phases, &cur.rho, sys.p_max).unwrap();
        assert_eq!(rho, vec![0.3, sem.rho_min]);
    }

    #[test]
    fn depth_ladder_never_loses_to_full_power() {
        for seed in 0..20 {
            let (st, sys, sem) = parts(3, 20, 200 + seed);
            let p = SlotProblem::new(&st, &sys, &sem, vec![1500.0; 3]).with_arrivals(vec![1500.0; 3]);
            let cur = SlotAction::initial(3, 20, 0.2, sys.p_max);
            let h = p.equivalent(&cur.phases).unwrap();
            let full = extraction_depths_at(&p, &cur.order, &cur.phases, &cur.rho, sys.p_max).unwrap();
            let best = extraction_depths(&p, &cur.order, &cur.phases, &cur.rho).unwrap();
            let e_full = depth_efficiency(&p, &cur.order, &h, &full).unwrap().unwrap_or(0.0);
            let e_best = depth_efficiency(&p, &cur.order, &h, &best).unwrap().unwrap();
            assert!(e_best >= e_full, "seed {seed}");
            assert!(best.iter().all(|&r| (sem.rho_min..=1.0).contains(&r)));
        }
    }

    #[test]
    fn lightweight_alignment_follows_largest_backlog() {
        let (st, sys, sem) = parts(3, 20, 2);
        let p = SlotProblem::new(&st, &sys, &sem, vec![300.0; 3]).with_backlog(vec![10.0, 900.0, 50.0]);
        let cur = SlotAction::initial(3, 20, 0.2, sys.p_max);
        let out = dispatch(OptimizerChoice::Beamforming, &p, &cur, OptimizerProfile::Lightweight).unwrap();
        assert_eq!(out.action.phases, aligned_phases(&st, 1).unwrap());
        assert_eq!(out.action.order, cur.order);
    }

    #[test]
    fn powers_always_refreshed() {
        let (st, sys, sem) = parts(3, 10, 3);
        let p = SlotProblem::new(&st, &sys, &sem, vec![300.0; 3]);
        let cur = SlotAction::initial(3, 10, 0.2, sys.p_max);
        for choice in OptimizerChoice::ALL {
            let out = dispatch(choice, &p, &cur, OptimizerProfile::Exact).unwrap();
            let h = p.equivalent(&out.action.phases).unwrap();
            let pc = min_power_for_targets(&h, &out.action.order, &p.targets, &p.schedule, &sys).unwrap();
            assert_eq!(out.action.power, pc.profile);
        }
    }

    #[test]
    fn idle_slot_dispatch() {
        let (st, sys, sem) = parts(2, 4, 4);
        let p = SlotProblem::new(&st, &sys, &sem, vec![0.0; 2]).with_schedule(vec![false; 2]);
        let cur = SlotAction::initial(2, 4, 0.2, sys.p_max);
        let out = dispatch(OptimizerChoice::Decoding, &p, &cur, OptimizerProfile::Exact).unwrap();
        assert!(out.feasible);
        assert_eq!(out.action.power.power, vec![0.0; 2]);
    }

    #[test]
    fn heuristic_order_is_much_faster_than_bruteforce() {
        let (st, sys, sem) = parts(6, 8, 5);
        let p = SlotProblem::new(&st, &sys, &sem, vec![200.0; 6]);
        let cur = SlotAction::initial(6, 8, 0.2, sys.p_max);
        let time = |profile| {
            let t0 = Instant::now();
            for _ in 0..1000 {
                std::hint::black_box(dispatch(OptimizerChoice::Decoding, &p, &cur, profile).unwrap());
            }
            t0.elapsed().as_secs_f64()
        };
        let exact = time(OptimizerProfile::Exact);
        let light = time(OptimizerProfile::Lightweight);
        assert!(exact >= 10.0 * light, "exact {exact}s vs lightweight {light}s");
    }

    #[test]
    fn all_selection_keeps_its_best_round() {
        let (st, sys, sem) = parts(3, 30, 6);
        let p = SlotProblem::new(&st, &sys, &sem, vec![400.0; 3]).with_arrivals(vec![1000.0; 3]);
        let cur = SlotAction::initial(3, 30, 0.2, sys.p_max);
        let all = all_selection(&p, &cur, OptimizerProfile::Exact, 1e-3, 5).unwrap();
        let eta_all = slot_efficiency(&p, &all.action).unwrap().0;
        let first = dispatch(OptimizerChoice::Extraction, &p, &cur, OptimizerProfile::Exact).unwrap();
        let eta = slot_efficiency(&p, &first.action).unwrap().0;
        assert!(eta_all >= eta);
    }
}
