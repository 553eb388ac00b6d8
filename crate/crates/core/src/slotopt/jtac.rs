//! Alternating optimization of decoding order, phases, extraction depth and
//! power for one real-time slot, where every SU sends all new data.

use serde::{Deserialize, Serialize};

use itertools::Itertools;

use super::dispatch::extraction_depths;
use super::order::MAX_BRUTEFORCE_USERS;
use super::phases::{phases_coordinate_ascent_with, PhaseObjective};
use super::SlotProblem;
use crate::action::SlotAction;
use crate::channel::PhaseVector;
use crate::error::{Error, Result};
use crate::noma::{min_power_for_targets, su_capacities, DecodingOrder, PowerControl};
use crate::scalar::Real;
use crate::semantic::total_energy;

/// Which variable, if any, stays at its initial value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    FixedPhase,
    FixedExtraction,
    FixedDecoding,
}

#[derive(Clone, Debug)]
pub struct JtacOptions<T> {
    /// Stop once the retained efficiency improves by no more than this.
    pub eps: T,
    pub max_iters: usize,
    pub ablation: Ablation,
    /// Round phases to `2^bits` levels after every phase update.
    pub quantize_bits: Option<u32>,
    pub sweeps: usize,
    pub phase_objective: PhaseObjective,
}

impl<T: Real> Default for JtacOptions<T> {
    fn default() -> Self {
        Self {
            eps: T::lit(1e-3),
            max_iters: 10,
            ablation: Ablation::None,
            quantize_bits: None,
            sweeps: 2,
            phase_objective: PhaseObjective::SumPower,
        }
    }
}

#[derive(Clone, Debug)]
pub struct JtacOutcome<T> {
    pub action: SlotAction<T>,
    /// Sum capacity over total energy, bits per joule.
    pub efficiency: T,
    /// Retained efficiency after initialization and after each iteration.
    pub history: Vec<T>,
    /// Efficiency of each iterate before retention.
    pub raw_history: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
    pub shortfall: T,
    pub capacities: Vec<T>,
}

#[derive(Clone)]
struct Iterate<T> {
    order: DecodingOrder,
    phases: PhaseVector<T>,
    rho: Vec<T>,
    power: PowerControl<T>,
    capacities: Vec<T>,
    efficiency: T,
}

fn targets<T: Real>(problem: &SlotProblem<'_, T>, rho: &[T]) -> Vec<T> {
    rho.iter().zip(&problem.arrivals).map(|(&r, &l)| r * l).collect()
}

fn evaluate<T: Real>(
    problem: &SlotProblem<'_, T>,
    order: DecodingOrder,
    phases: PhaseVector<T>,
    rho: Vec<T>,
) -> Result<Iterate<T>> {
    let h = problem.equivalent(&phases)?;
    let t = targets(problem, &rho);
    let power = min_power_for_targets(&h, &order, &t, &problem.schedule, problem.sys)?;
    let capacities = su_capacities(&h, &power.profile, &order, problem.sys)?;
    let energy = total_energy(&capacities, &rho, &power.profile, problem.sem, problem.sys)?;
    let sum = capacities.iter().fold(T::zero(), |a, &b| a + b);
    let efficiency = if energy > T::zero() { sum / energy } else { T::zero() };
    Ok(Iterate {
        order,
        phases,
        rho,
        power,
        capacities,
        efficiency,
    })
}

/// Every order of the scheduled SUs, idle SUs appended.
fn all_orders<T: Real>(problem: &SlotProblem<'_, T>) -> Result<Vec<DecodingOrder>> {
    let active = problem.active();
    if active.len() > MAX_BRUTEFORCE_USERS {
        return Err(Error::Domain(format!(
            "order search limited to {MAX_BRUTEFORCE_USERS} active SUs, got {}",
            active.len()
        )));
    }
    let idle: Vec<usize> = (0..problem.num_users()).filter(|&k| !problem.schedule[k]).collect();
    active
        .iter()
        .copied()
        .permutations(active.len())
        .map(|perm| DecodingOrder::from_sequence(perm.into_iter().chain(idle.iter().copied()).collect()))
        .collect()
}

/// Feasible first, then higher efficiency.
fn improves<T: Real>(cand: &Iterate<T>, best: &Iterate<T>) -> bool {
    if cand.power.feasible != best.power.feasible {
        return cand.power.feasible;
    }
    cand.efficiency > best.efficiency
}

/// Alternating loop with default options.
pub fn jtac_alternating<T: Real>(problem: &SlotProblem<'_, T>, eps: T, max_iters: usize) -> Result<JtacOutcome<T>> {
    jtac_with(
        problem,
        &JtacOptions {
            eps,
            max_iters,
            ..JtacOptions::default()
        },
    )
}

/// Order, phases, depth and power in turn until the retained efficiency
/// stops improving by more than `eps`, or `max_iters` iterations.
///
/// `problem.arrivals` holds the per-SU raw arrivals; targets are derived
/// from the current depths. Starts from the identity order, uniform phases
/// of `pi`, `rho = rho_min` and `p = p_max`.
pub fn jtac_with<T: Real>(problem: &SlotProblem<'_, T>, opts: &JtacOptions<T>) -> Result<JtacOutcome<T>> {
    problem.validate()?;
    let k = problem.num_users();
    let l = problem.state.num_elements();
    let init = SlotAction::initial(k, l, problem.sem.rho_min, problem.sys.p_max);
    let mut phases = init.phases.clone();
    if let Some(bits) = opts.quantize_bits {
        phases = phases.quantized(bits);
    }
    // every SU asks to send all of its arrivals
    let mut depth_problem = problem.clone();
    depth_problem.demand = problem.arrivals.clone();
    depth_problem.carried = vec![T::zero(); k];
    let mut current = evaluate(problem, init.order, phases, init.rho)?;
    let mut best = current.clone();
    let mut history = vec![current.efficiency];
    let mut raw_history = vec![current.efficiency];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let mut sub = problem.clone();
        sub.targets = targets(problem, &current.rho);
        sub.power = current.power.profile.power.clone();

        // each candidate order is followed through the phase and depth
        // updates, and the best resulting iterate moves on
        let orders = if opts.ablation == Ablation::FixedDecoding {
            vec![current.order.clone()]
        } else {
            all_orders(problem)?
        };
        let mut next: Option<Iterate<T>> = None;
        for order in orders {
            let phases = if opts.ablation == Ablation::FixedPhase {
                current.phases.clone()
            } else {
                let p = phases_coordinate_ascent_with(&sub, &order, &current.phases, opts.sweeps, opts.phase_objective)?
                    .phases;
                match opts.quantize_bits {
                    Some(bits) => p.quantized(bits),
                    None => p,
                }
            };
            let rho = if opts.ablation == Ablation::FixedExtraction {
                current.rho.clone()
            } else {
                extraction_depths(&depth_problem, &order, &phases, &current.rho)?
            };
            let cand = evaluate(problem, order, phases, rho)?;
            if next.as_ref().is_none_or(|b| improves(&cand, b)) {
                next = Some(cand);
            }
        }
        let next = next.expect("at least one order");
        raw_history.push(next.efficiency);

        // keep the better of the new iterate and everything seen so far
        let prev = best.efficiency;
        if next.efficiency > best.efficiency {
            best = next.clone();
        }
        history.push(best.efficiency);
        current = next;
        if best.efficiency - prev <= opts.eps {
            converged = true;
            break;
        }
    }

    let mut action = SlotAction::initial(k, l, problem.sem.rho_min, problem.sys.p_max);
    action.extract = problem.arrivals.clone();
    action.targets = targets(problem, &best.rho);
    action.rho = best.rho;
    action.order = best.order;
    action.phases = best.phases;
    action.power = best.power.profile.clone();
    Ok(JtacOutcome {
        action,
        efficiency: best.efficiency,
        history,
        raw_history,
        iterations,
        converged,
        feasible: best.power.feasible,
        shortfall: best.power.shortfall,
        capacities: best.capacities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channels, FadingParams, Geometry};
    use crate::params::SystemParams;
    use crate::semantic::SemanticParams;

    fn default_problem_parts(seed: u64) -> (crate::channel::ChannelState<f64>, SystemParams<f64>, SemanticParams<f64>) {
        let g = Geometry::scattered(3, 70, 1.0, seed).unwrap();
        let st = sample_channels(&g, &FadingParams::default(), seed).unwrap();
        (st, SystemParams::default(), SemanticParams::default())
    }

    #[test]
    fn retained_efficiency_is_monotone_and_converges() {
        for seed in 0..5 {
            let (st, sys, sem) = default_problem_parts(seed);
            let p = SlotProblem::new(&st, &sys, &sem, vec![1000.0; 3]);
            let out = jtac_alternating(&p, 1e-3, 10).unwrap();
            for w in out.history.windows(2) {
                assert!(w[1] >= w[0]);
            }
            assert!(out.converged, "seed {seed}: {:?}", out.raw_history);
            assert!(out.iterations <= 10);
        }
    }

    #[test]
    fn feasible_outcome_meets_targets() {
        for seed in 0..5 {
            let (st, sys, sem) = default_problem_parts(seed);
            let p = SlotProblem::new(&st, &sys, &sem, vec![1000.0; 3]);
            let out = jtac_alternating(&p, 1e-3, 10).unwrap();
            if out.feasible {
                for k in 0..3 {
                    let need = (out.action.rho[k] * 1000.0).max(sys.s_min);
                    assert!(out.capacities[k] >= need * (1.0 - 1e-9));
                }
            }
        }
    }

    #[test]
    fn joint_beats_every_ablation() {
        for seed in 0..5 {
            let (st, sys, sem) = default_problem_parts(seed);
            let p = SlotProblem::new(&st, &sys, &sem, vec![1000.0; 3]);
            let full = jtac_with(&p, &JtacOptions::default()).unwrap().efficiency;
            for ab in [Ablation::FixedPhase, Ablation::FixedExtraction, Ablation::FixedDecoding] {
                let opts = JtacOptions {
                    ablation: ab,
                    ..JtacOptions::default()
                };
                let e = jtac_with(&p, &opts).unwrap().efficiency;
                assert!(full >= e, "seed {seed} {ab:?}: {full} < {e}");
            }
        }
    }
}
