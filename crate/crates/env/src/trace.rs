use serde::{Deserialize, Serialize};

/// Everything logged about one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    /// Normalized observation the decision was made from.
    pub observation: Vec<f64>,
    pub arrivals: Vec<f64>,
    /// Requested extraction and transmit sizes after clamping.
    pub extract_request: Vec<f64>,
    pub transmit_request: Vec<f64>,
    /// Raw bits actually extracted.
    pub extracted: Vec<f64>,
    pub scheduled: Vec<bool>,
    /// Optimizer mode `1..=3`, or 0 when no single mode was dispatched.
    pub mode: usize,
    pub rho: Vec<f64>,
    pub targets: Vec<f64>,
    pub capacities: Vec<f64>,
    pub power: Vec<f64>,
    pub feasible: bool,
    pub shortfall: f64,
    pub energy: f64,
    pub sum_capacity: f64,
    /// Recovered raw bits per joule.
    pub eta: f64,
    pub penalty: f64,
    pub reward: f64,
    pub raw_backlog: Vec<f64>,
    pub sem_backlog: Vec<f64>,
    pub window_mean: Vec<f64>,
    pub policy_secs: f64,
    pub optimizer_secs: f64,
}

impl SlotRecord {
    /// Policy forward plus optimizer time.
    pub fn decision_secs(&self) -> f64 {
        self.policy_secs + self.optimizer_secs
    }
}

/// Append-only per-slot log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    records: Vec<SlotRecord>,
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl EpisodeTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: SlotRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mean_eta(&self) -> f64 {
        mean(self.records.iter().map(|r| r.eta))
    }

    pub fn mean_reward(&self) -> f64 {
        mean(self.records.iter().map(|r| r.reward))
    }

    pub fn mean_penalty(&self) -> f64 {
        mean(self.records.iter().map(|r| r.penalty))
    }

    /// Total recovered raw bits over total energy across the trace.
    pub fn energy_efficiency(&self) -> f64 {
        let bits: f64 = self
            .records
            .iter()
            .map(|r| r.capacities.iter().zip(&r.rho).map(|(s, p)| s / p).sum::<f64>())
            .sum();
        let energy: f64 = self.records.iter().map(|r| r.energy).sum();
        if energy > 0.0 {
            bits / energy
        } else {
            0.0
        }
    }

    pub fn mean_decision_secs(&self) -> f64 {
        mean(self.records.iter().map(SlotRecord::decision_secs))
    }

    /// Mean total backlog per SU and slot.
    pub fn mean_backlog(&self) -> f64 {
        mean(
            self.records
                .iter()
                .flat_map(|r| r.raw_backlog.iter().zip(&r.sem_backlog).map(|(a, b)| a + b)),
        )
    }

    /// Fraction of slots where every SU's windowed backlog is within `b_max`.
    pub fn window_compliance(&self, b_max: f64) -> f64 {
        mean(
            self.records
                .iter()
                .map(|r| f64::from(u8::from(r.window_mean.iter().all(|&w| w <= b_max)))),
        )
    }
}
