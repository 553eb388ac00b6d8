use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use risnoma_core::action::{OptimizerChoice, SlotAction};
use risnoma_core::channel::{compose_equivalent, ChannelProcess, ChannelState, PhaseVector};
use risnoma_core::noma::{min_power_for_targets, su_capacities, DecodingOrder, TransmitProfile};
use risnoma_core::semantic::{
    delay_window_penalty, effective_extraction, step_deferrable_queues, step_realtime_queue, total_energy,
    QueuePair,
};
use risnoma_core::slotopt::{all_selection, dispatch, jtac_with, JtacOptions, SlotProblem};

use crate::config::{EnvConfig, ExtractionMode};
use crate::error::{EnvError, Result};
use crate::trace::{EpisodeTrace, SlotRecord};

/// The learned part of a slot decision: `(D, Z, psi, m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedAction {
    /// Raw bits to extract.
    pub extract: Vec<f64>,
    /// Semantic bits to send.
    pub transmit: Vec<f64>,
    pub schedule: Vec<bool>,
    pub mode: OptimizerChoice,
}

impl LearnedAction {
    /// Extract nothing, send nothing.
    pub fn idle(k: usize) -> Self {
        Self {
            extract: vec![0.0; k],
            transmit: vec![0.0; k],
            schedule: vec![false; k],
            mode: OptimizerChoice::Extraction,
        }
    }

    /// Extract and send as much as the bounds allow.
    pub fn greedy(d_max: &[f64], mode: OptimizerChoice) -> Self {
        Self {
            extract: d_max.to_vec(),
            transmit: d_max.to_vec(),
            schedule: vec![true; d_max.len()],
            mode,
        }
    }

    pub fn num_users(&self) -> usize {
        self.extract.len()
    }

    pub fn clone_with_mode(&self, mode: OptimizerChoice) -> Self {
        Self { mode, ..self.clone() }
    }
}

/// Optimized variables supplied directly instead of through an optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectControls {
    pub rho: Vec<f64>,
    pub order: DecodingOrder,
    pub phases: PhaseVector<f64>,
}

/// Who sets `(rho, order, phases)` for the slot.
#[derive(Clone, Debug)]
pub enum Decision {
    /// Only the family named by the learned mode is re-optimized.
    Dispatch,
    /// All three families alternately until the slot efficiency settles.
    AllSelection,
    Direct(DirectControls),
    /// The per-slot alternating loop; needs real-time extraction.
    Jtac(JtacOptions<f64>),
}

/// State the policy sees at the start of a slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// `|h_k|^2` under the current phases.
    pub gains: Vec<f64>,
    pub raw_backlog: Vec<f64>,
    pub sem_backlog: Vec<f64>,
    /// Raw bits that arrived for this slot.
    pub last_arrival: Vec<f64>,
    /// Slot index modulo the episode length.
    pub slot: usize,
    vector: Vec<f64>,
}

impl Observation {
    /// Normalized feature vector: gains in dB over noise divided by 100,
    /// backlogs over `b_max`, arrivals over their mean, then slot phase.
    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    fn build(cfg: &EnvConfig, gains: Vec<f64>, queues: &[QueuePair<f64>], arrivals: &[f64], slot: usize) -> Self {
        let raw_backlog: Vec<f64> = queues.iter().map(|q| q.raw_backlog).collect();
        let sem_backlog: Vec<f64> = queues.iter().map(|q| q.sem_backlog).collect();
        let slot = slot % cfg.episode_len;
        let mut vector = Vec::with_capacity(cfg.obs_dim());
        for &g in &gains {
            let db = 10.0 * (g / cfg.sys.noise_power).max(1e-30).log10();
            vector.push(db / 100.0);
        }
        vector.extend(raw_backlog.iter().map(|b| b / cfg.b_max));
        vector.extend(sem_backlog.iter().map(|b| b / cfg.b_max));
        vector.extend(
            arrivals
                .iter()
                .zip(&cfg.arrival_mean)
                .map(|(a, m)| if *m > 0.0 { a / m } else { 0.0 }),
        );
        vector.push(slot as f64 / cfg.episode_len as f64);
        Self {
            gains,
            raw_backlog,
            sem_backlog,
            last_arrival: arrivals.to_vec(),
            slot,
            vector,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    /// True on the last slot of an episode.
    pub done: bool,
    pub record: SlotRecord,
}

/// One uplink cell: channels, arrivals, queues and the persisted optimized
/// variables, advanced one slot per [`SemanticNomaEnv::step`].
#[derive(Clone, Debug)]
pub struct SemanticNomaEnv {
    cfg: EnvConfig,
    process: ChannelProcess<f64>,
    rng: ChaCha8Rng,
    state: Option<ChannelState<f64>>,
    queues: Vec<QueuePair<f64>>,
    arrivals: Vec<f64>,
    controls: SlotAction<f64>,
    slot: usize,
}

impl SemanticNomaEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let process = ChannelProcess::new(&cfg.geometry, &cfg.fading)?;
        let k = cfg.num_users();
        let controls = SlotAction::initial(k, cfg.num_elements(), cfg.sem.rho_min, cfg.sys.p_max);
        Ok(Self {
            process,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: None,
            queues: vec![QueuePair::new(cfg.window); k],
            arrivals: vec![0.0; k],
            controls,
            slot: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn num_users(&self) -> usize {
        self.cfg.num_users()
    }

    /// Optimized variables carried into the next slot.
    pub fn controls(&self) -> &SlotAction<f64> {
        &self.controls
    }

    pub fn queues(&self) -> &[QueuePair<f64>] {
        &self.queues
    }

    pub fn channel(&self) -> Option<&ChannelState<f64>> {
        self.state.as_ref()
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    /// Empty queues, initial controls, fresh channels and arrivals.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.process = ChannelProcess::new(&self.cfg.geometry, &self.cfg.fading)?;
        let k = self.num_users();
        self.queues = vec![QueuePair::new(self.cfg.window); k];
        self.controls = SlotAction::initial(k, self.cfg.num_elements(), self.cfg.sem.rho_min, self.cfg.sys.p_max);
        self.slot = 0;
        self.state = Some(self.process.sample(&mut self.rng));
        self.arrivals = self.draw_arrivals();
        self.observe()
    }

    fn draw_arrivals(&mut self) -> Vec<f64> {
        let frac = self.cfg.arrival_std_frac;
        let means = self.cfg.arrival_mean.clone();
        means
            .into_iter()
            .map(|m| {
                let sd = frac * m;
                if sd > 0.0 {
                    let n = Normal::new(m, sd).expect("finite moments");
                    n.sample(&mut self.rng).max(0.0)
                } else {
                    m
                }
            })
            .collect()
    }

    fn observe(&self) -> Result<Observation> {
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        let h = compose_equivalent(state, &self.controls.phases)?;
        let gains = h.iter().map(|c| c.norm_sqr()).collect();
        Ok(Observation::build(&self.cfg, gains, &self.queues, &self.arrivals, self.slot))
    }

    /// A uniformly random learned action, the reference random policy.
    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> LearnedAction {
        let d_max = self.cfg.d_max();
        LearnedAction {
            extract: d_max.iter().map(|&d| rng.random_range(0.0..=d)).collect(),
            transmit: d_max.iter().map(|&d| rng.random_range(0.0..=d)).collect(),
            schedule: d_max.iter().map(|_| rng.random_bool(0.5)).collect(),
            mode: OptimizerChoice::ALL[rng.random_range(0..3)],
        }
    }

    /// Dispatches the learned mode and advances one slot.
    pub fn step(&mut self, learned: &LearnedAction) -> Result<StepOutcome> {
        self.step_with(learned, &Decision::Dispatch)
    }

    /// Applies `learned`, lets `decision` set the optimized variables, serves
    /// the resulting targets with minimum power, updates the queues and
    /// draws the next slot's channels and arrivals.
    ///
    /// In real-time mode `D`, `Z` and `psi` are ignored: every SU extracts
    /// its whole raw backlog and sends `rho` times that.
    pub fn step_with(&mut self, learned: &LearnedAction, decision: &Decision) -> Result<StepOutcome> {
        let k = self.num_users();
        if learned.extract.len() != k || learned.transmit.len() != k || learned.schedule.len() != k {
            return Err(EnvError::Action(format!("learned action sized for {} SUs, env has {k}", learned.num_users())));
        }
        let observation = self.observe()?.vector;
        let state = self.state.take().ok_or(EnvError::NotReset)?;
        let result = self.advance(&state, observation, learned, decision);
        self.state = Some(state);
        let record = result?;

        self.slot += 1;
        self.state = Some(self.process.sample(&mut self.rng));
        self.arrivals = self.draw_arrivals();
        let observation = self.observe()?;
        Ok(StepOutcome {
            reward: record.reward,
            done: self.slot % self.cfg.episode_len == 0,
            observation,
            record,
        })
    }

    fn advance(
        &mut self,
        state: &ChannelState<f64>,
        observation: Vec<f64>,
        learned: &LearnedAction,
        decision: &Decision,
    ) -> Result<SlotRecord> {
        let cfg = &self.cfg;
        let (sys, sem) = (&cfg.sys, &cfg.sem);
        let k = cfg.num_users();
        let d_max = cfg.d_max();
        let a = self.arrivals.clone();
        let clamp = |v: f64, hi: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, hi) };
        let extract_request: Vec<f64> = (0..k).map(|i| clamp(learned.extract[i], d_max[i])).collect();
        let transmit_request: Vec<f64> = (0..k).map(|i| clamp(learned.transmit[i], d_max[i])).collect();

        let realtime = cfg.mode == ExtractionMode::Realtime;
        if matches!(decision, Decision::Jtac(_)) && !realtime {
            return Err(EnvError::Action("the alternating loop needs real-time extraction".into()));
        }
        let (extracted, demand, carried, requested): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>) = if realtime {
            let d: Vec<f64> = (0..k).map(|i| self.queues[i].raw_backlog + a[i]).collect();
            let req = d.iter().map(|&v| v > 0.0).collect();
            (d.clone(), d, vec![0.0; k], req)
        } else {
            let d = (0..k)
                .map(|i| effective_extraction(&self.queues[i], a[i], extract_request[i]))
                .collect();
            let demand = (0..k)
                .map(|i| if learned.schedule[i] { transmit_request[i] } else { 0.0 })
                .collect();
            let carried = self.queues.iter().map(|q| q.sem_backlog).collect();
            (d, demand, carried, learned.schedule.clone())
        };

        // bits each SU would send at depths `rho`; below S_min it stays idle
        let plan = |rho: &[f64]| -> (Vec<f64>, Vec<bool>) {
            (0..k)
                .map(|i| {
                    let t = demand[i].min(carried[i] + rho[i] * extracted[i]);
                    if requested[i] && t >= sys.s_min {
                        (t, true)
                    } else {
                        (0.0, false)
                    }
                })
                .unzip()
        };

        let mut act = self.controls.clone();
        let (provisional, _) = plan(&act.rho);
        let mut mode = 0;
        let started = Instant::now();
        if requested.iter().any(|&r| r) {
            let reference = if act.power.power.iter().any(|&p| p > 0.0) {
                act.power.power.clone()
            } else {
                vec![sys.p_max; k]
            };
            let problem = SlotProblem::new(state, sys, sem, provisional)
                .with_arrivals(extracted.clone())
                .with_schedule(requested.clone())
                .with_demand(demand.clone())
                .with_carried(carried.clone())
                .with_backlog(self.queues.iter().map(|q| q.sem_backlog).collect())
                .with_power(reference);
            match decision {
                Decision::Dispatch => {
                    mode = learned.mode.index();
                    act = dispatch(learned.mode, &problem, &act, cfg.profile)?.action;
                }
                Decision::AllSelection => {
                    act = all_selection(&problem, &act, cfg.profile, cfg.all_selection_eps, cfg.all_selection_rounds)?
                        .action;
                }
                Decision::Direct(c) => {
                    if c.rho.len() != k || c.order.len() != k || c.phases.len() != cfg.num_elements() {
                        return Err(EnvError::Action("direct controls have the wrong shape".into()));
                    }
                    act.rho = c.rho.iter().map(|&r| clamp(r, 1.0).max(sem.rho_min)).collect();
                    act.order = c.order.clone();
                    act.phases = c.phases.clone();
                }
                Decision::Jtac(opts) => {
                    let p = problem.clone().with_demand(extracted.clone());
                    let out = jtac_with(&p, opts)?;
                    act.rho = out.action.rho;
                    act.order = out.action.order;
                    act.phases = out.action.phases;
                }
            }
        } else if let Decision::Dispatch = decision {
            mode = learned.mode.index();
        }
        let optimizer_secs = started.elapsed().as_secs_f64();

        let (targets, scheduled) = plan(&act.rho);
        let h = compose_equivalent(state, &act.phases)?;
        let (profile, feasible, shortfall) = if scheduled.iter().any(|&s| s) {
            let pc = min_power_for_targets(&h, &act.order, &targets, &scheduled, sys)?;
            (pc.profile, pc.feasible, pc.shortfall)
        } else {
            (TransmitProfile::idle(k), true, 0.0)
        };
        let raw_caps = su_capacities(&h, &profile, &act.order, sys)?;
        let capacities: Vec<f64> = (0..k)
            .map(|i| if scheduled[i] { raw_caps[i].min(targets[i]) } else { 0.0 })
            .collect();
        let energy = total_energy(&capacities, &act.rho, &profile, sem, sys)?;
        let recovered: f64 = capacities.iter().zip(&act.rho).map(|(s, r)| s / r).sum();
        let eta = if energy > 0.0 { recovered / energy } else { 0.0 };

        for i in 0..k {
            self.queues[i] = if realtime {
                step_realtime_queue(&self.queues[i], a[i], capacities[i], act.rho[i])
            } else {
                step_deferrable_queues(&self.queues[i], a[i], extracted[i], act.rho[i], capacities[i])
            };
        }
        let penalty: f64 = self
            .queues
            .iter()
            .map(|q| delay_window_penalty(q, cfg.b_max, cfg.penalty_weight, cfg.penalty_kind))
            .sum();
        let reward = eta - penalty;

        act.mode = learned.mode;
        act.extract = extracted.clone();
        act.targets = targets.clone();
        act.power = profile;
        let record = SlotRecord {
            slot: self.slot,
            observation,
            arrivals: a,
            extract_request,
            transmit_request,
            extracted,
            scheduled,
            mode,
            rho: act.rho.clone(),
            targets,
            capacities: capacities.clone(),
            power: act.power.power.clone(),
            feasible,
            shortfall,
            energy,
            sum_capacity: capacities.iter().sum(),
            eta,
            penalty,
            reward,
            raw_backlog: self.queues.iter().map(|q| q.raw_backlog).collect(),
            sem_backlog: self.queues.iter().map(|q| q.sem_backlog).collect(),
            window_mean: self.queues.iter().map(|q| q.window_mean()).collect(),
            policy_secs: 0.0,
            optimizer_secs,
        };
        self.controls = act;
        Ok(record)
    }
}

/// Maps observations to learned actions.
pub trait Policy {
    fn decide(&mut self, obs: &Observation) -> LearnedAction;
}

impl<F: FnMut(&Observation) -> LearnedAction> Policy for F {
    fn decide(&mut self, obs: &Observation) -> LearnedAction {
        self(obs)
    }
}

/// Closed loop: reset under `seed`, then `slots` rounds of policy,
/// dispatch and step. Policy time is logged with each record.
pub fn run_policy<P: Policy + ?Sized>(
    env: &mut SemanticNomaEnv,
    policy: &mut P,
    slots: usize,
    seed: u64,
) -> Result<EpisodeTrace> {
    let mut trace = EpisodeTrace::new();
    let mut obs = env.reset(seed)?;
    for _ in 0..slots {
        let t0 = Instant::now();
        let action = policy.decide(&obs);
        let policy_secs = t0.elapsed().as_secs_f64();
        let mut out = env.step(&action)?;
        out.record.policy_secs = policy_secs;
        trace.push(out.record);
        obs = out.observation;
    }
    Ok(trace)
}
