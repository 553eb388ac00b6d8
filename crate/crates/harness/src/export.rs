//! CSV output: per-slot traces, training logs and figure data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use risnoma_env::{EpisodeTrace, SlotRecord};
use risnoma_ppo::TrainLog;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::run::RunReport;
use crate::stats::{mean, rho_by_arrival, std_dev};

/// Figure-analog file stems.
pub const FIGURES: [&str; 9] = [
    "fig2_convergence",
    "fig3_learning",
    "fig4_ris",
    "fig5_deferrable",
    "fig6_scaling",
    "fig7_behavior",
    "fig8_modes",
    "fig9_lightweight",
    "table3_timing",
];

/// One row per SU and slot; slot-level columns repeat across the slot's SUs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TraceRow {
    slot: usize,
    su: usize,
    arrival: f64,
    extract_request: f64,
    transmit_request: f64,
    extracted: f64,
    scheduled: bool,
    rho: f64,
    target: f64,
    capacity: f64,
    power: f64,
    raw_backlog: f64,
    sem_backlog: f64,
    window_mean: f64,
    mode: usize,
    feasible: bool,
    shortfall: f64,
    energy: f64,
    sum_capacity: f64,
    eta: f64,
    penalty: f64,
    reward: f64,
    policy_secs: f64,
    optimizer_secs: f64,
}

pub fn write_trace_csv(trace: &EpisodeTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in trace.records() {
        for su in 0..r.rho.len() {
            w.serialize(TraceRow {
                slot: r.slot,
                su,
                arrival: r.arrivals[su],
                extract_request: r.extract_request[su],
                transmit_request: r.transmit_request[su],
                extracted: r.extracted[su],
                scheduled: r.scheduled[su],
                rho: r.rho[su],
                target: r.targets[su],
                capacity: r.capacities[su],
                power: r.power[su],
                raw_backlog: r.raw_backlog[su],
                sem_backlog: r.sem_backlog[su],
                window_mean: r.window_mean[su],
                mode: r.mode,
                feasible: r.feasible,
                shortfall: r.shortfall,
                energy: r.energy,
                sum_capacity: r.sum_capacity,
                eta: r.eta,
                penalty: r.penalty,
                reward: r.reward,
                policy_secs: r.policy_secs,
                optimizer_secs: r.optimizer_secs,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`]. Observations are not
/// stored and come back empty.
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<EpisodeTrace> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut trace = EpisodeTrace::new();
    let mut cur: Option<SlotRecord> = None;
    let mut seq = 0usize;
    for row in rd.deserialize() {
        let row: TraceRow = row?;
        if row.su == 0 {
            if let Some(r) = cur.take() {
                trace.push(r);
            }
            seq += 1;
            cur = Some(SlotRecord {
                slot: row.slot,
                observation: Vec::new(),
                arrivals: Vec::new(),
                extract_request: Vec::new(),
                transmit_request: Vec::new(),
                extracted: Vec::new(),
                scheduled: Vec::new(),
                mode: row.mode,
                rho: Vec::new(),
                targets: Vec::new(),
                capacities: Vec::new(),
                power: Vec::new(),
                feasible: row.feasible,
                shortfall: row.shortfall,
                energy: row.energy,
                sum_capacity: row.sum_capacity,
                eta: row.eta,
                penalty: row.penalty,
                reward: row.reward,
                raw_backlog: Vec::new(),
                sem_backlog: Vec::new(),
                window_mean: Vec::new(),
                policy_secs: row.policy_secs,
                optimizer_secs: row.optimizer_secs,
            });
        }
        let r = cur
            .as_mut()
            .ok_or_else(|| HarnessError::Config(format!("trace row {seq} does not start at SU 0")))?;
        r.arrivals.push(row.arrival);
        r.extract_request.push(row.extract_request);
        r.transmit_request.push(row.transmit_request);
        r.extracted.push(row.extracted);
        r.scheduled.push(row.scheduled);
        r.rho.push(row.rho);
        r.targets.push(row.target);
        r.capacities.push(row.capacity);
        r.power.push(row.power);
        r.raw_backlog.push(row.raw_backlog);
        r.sem_backlog.push(row.sem_backlog);
        r.window_mean.push(row.window_mean);
    }
    if let Some(r) = cur {
        trace.push(r);
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EpisodeRow {
    episode: usize,
    episode_return: f64,
    mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct UpdateRow {
    update: usize,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    approx_kl: f64,
    clip_fraction: f64,
    aborted: bool,
}

/// Writes `<stem>_episodes.csv` and `<stem>_updates.csv`.
pub fn write_train_log(log: &TrainLog, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}_episodes.csv")))?;
    for (i, (ret, m)) in log.episode_returns.iter().zip(&log.episode_means).enumerate() {
        w.serialize(EpisodeRow {
            episode: i,
            episode_return: *ret,
            mean_reward: *m,
        })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}_updates.csv")))?;
    for (i, u) in log.updates.iter().enumerate() {
        w.serialize(UpdateRow {
            update: i,
            policy_loss: u.policy_loss,
            value_loss: u.value_loss,
            entropy: u.entropy,
            approx_kl: u.approx_kl,
            clip_fraction: u.clip_fraction,
            aborted: u.aborted,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Seed-aggregated value of one metric at one point of one figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub figure: String,
    pub scheme: String,
    pub param: String,
    pub value: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Metrics taken from each report.
pub const REPORT_METRICS: [&str; 11] = [
    "energy_efficiency",
    "mean_eta",
    "mean_reward",
    "mean_backlog",
    "window_compliance",
    "mean_decision_secs",
    "mean_rho",
    "mode1",
    "mode2",
    "mode3",
    "train_trailing_reward",
];

fn metric(r: &RunReport, name: &str) -> Option<f64> {
    Some(match name {
        "energy_efficiency" => r.energy_efficiency,
        "mean_eta" => r.mean_eta,
        "mean_reward" => r.mean_reward,
        "mean_backlog" => r.mean_backlog,
        "window_compliance" => r.window_compliance,
        "mean_decision_secs" => r.mean_decision_secs,
        "mean_rho" => r.mean_rho,
        "mode1" => r.mode_frequencies[0],
        "mode2" => r.mode_frequencies[1],
        "mode3" => r.mode_frequencies[2],
        "train_trailing_reward" => r.train_trailing_reward?,
        _ => return None,
    })
}

fn aggregate(figure: &str, scheme: &str, param: &str, value: f64, metric: &str, xs: &[f64]) -> PlotRow {
    PlotRow {
        figure: figure.into(),
        scheme: scheme.into(),
        param: param.into(),
        value,
        metric: metric.into(),
        mean: mean(xs),
        std: std_dev(xs),
        n: xs.len(),
    }
}

/// Groups reports by scheme and swept value (first-seen order) and
/// aggregates every metric over seeds.
pub fn summarize(figure: &str, reports: &[RunReport]) -> Vec<PlotRow> {
    let mut keys: Vec<(String, String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, String, u64), Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        let param = r.param.clone().unwrap_or_else(|| "none".into());
        let key = (r.scheme.clone(), param, r.value.unwrap_or(0.0).to_bits());
        if !groups.contains_key(&key) {
            keys.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut rows = Vec::new();
    for key in keys {
        let group = &groups[&key];
        for name in REPORT_METRICS {
            let xs: Vec<f64> = group.iter().filter_map(|r| metric(r, name)).collect();
            if !xs.is_empty() {
                rows.push(aggregate(figure, &key.0, &key.1, f64::from_bits(key.2), name, &xs));
            }
        }
    }
    rows
}

/// Per-iteration mean and spread of alternating-loop efficiency histories.
/// Shorter histories are extended with their last value.
pub fn convergence_rows(figure: &str, scheme: &str, histories: &[Vec<f64>]) -> Vec<PlotRow> {
    let len = histories.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let xs: Vec<f64> = histories
                .iter()
                .filter_map(|h| h.get(i).or(h.last()).copied())
                .collect();
            aggregate(figure, scheme, "iteration", i as f64, "efficiency", &xs)
        })
        .collect()
}

/// Per-episode mean training reward across seeds.
pub fn learning_rows(figure: &str, scheme: &str, logs: &[TrainLog]) -> Vec<PlotRow> {
    let len = logs.iter().map(|l| l.episode_means.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let xs: Vec<f64> = logs.iter().map(|l| l.episode_means[i]).collect();
            aggregate(figure, scheme, "episode", i as f64, "mean_reward", &xs)
        })
        .collect()
}

/// Mean depth per arrival bucket, pooled over traces.
pub fn rho_bucket_rows(figure: &str, scheme: &str, traces: &[EpisodeTrace], width: f64) -> Vec<PlotRow> {
    let mut pooled: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for t in traces {
        for (edge, m, _) in rho_by_arrival(t, width) {
            pooled.entry((edge / width).round() as i64).or_default().push(m);
        }
    }
    pooled
        .into_iter()
        .map(|(b, xs)| aggregate(figure, scheme, "arrival_bucket", b as f64 * width, "mean_rho", &xs))
        .collect()
}

/// Writes one `<figure>.csv` per figure present in `rows`, rows in input
/// order. Writing the same rows again gives byte-identical files.
pub fn emit_plotdata(rows: &[PlotRow], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.figure.as_str()) {
            order.push(&r.figure);
        }
    }
    let mut paths = Vec::new();
    for fig in order {
        let path = dir.join(format!("{fig}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows.iter().filter(|r| r.figure == fig) {
            w.serialize(r)?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes reports as TOML, one `[[report]]` table each.
pub fn write_reports(reports: &[RunReport], path: impl AsRef<Path>) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        report: &'a [RunReport],
    }
    let text = toml::to_string(&Doc { report: reports }).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<RunReport>> {
    #[derive(Deserialize)]
    struct Doc {
        #[serde(default)]
        report: Vec<RunReport>,
    }
    let text = fs::read_to_string(path)?;
    let doc: Doc = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(doc.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::run::run_scheme;
    use crate::scheme::Scheme;

    fn random_run(seed: u64) -> crate::run::RunOutput {
        let mut cfg = ExperimentConfig::default().with_scheme(Scheme::Random).with_elements(4);
        cfg.eval_slots = 30;
        cfg.seed = seed;
        run_scheme(&cfg).unwrap()
    }

    #[test]
    fn trace_csv_reproduces_the_report() {
        let out = random_run(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&out.trace, &path).unwrap();
        let back = read_trace_csv(&path).unwrap();
        let env = crate::run::env_for(&ExperimentConfig::default().with_elements(4), Scheme::Random);
        let again = RunReport::from_trace(Scheme::Random, 1, &env, &back, None);
        assert_eq!(again, out.report);
    }

    #[test]
    fn plotdata_schema_and_idempotence() {
        let reports: Vec<RunReport> = (0..5).map(|s| random_run(s).report).collect();
        let rows = summarize("fig5_deferrable", &reports);
        let ee = rows.iter().find(|r| r.metric == "energy_efficiency").unwrap();
        assert_eq!((ee.scheme.as_str(), ee.n), ("random", 5));
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_plotdata(&rows, dir.path()).unwrap();
        let first = fs::read(&paths[0]).unwrap();
        emit_plotdata(&rows, dir.path()).unwrap();
        assert_eq!(fs::read(&paths[0]).unwrap(), first);
        let header = String::from_utf8(first).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "figure,scheme,param,value,metric,mean,std,n");
    }

    #[test]
    fn reports_round_trip() {
        let reports = vec![random_run(2).report, random_run(3).report];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.toml");
        write_reports(&reports, &path).unwrap();
        assert_eq!(read_reports(&path).unwrap(), reports);
    }

    #[test]
    fn curves_extend_and_truncate() {
        let rows = convergence_rows("fig2_convergence", "alg1-greedy", &[vec![1.0, 2.0], vec![3.0]]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].mean, 2.5);
        let a = TrainLog {
            episode_means: vec![1.0, 2.0, 3.0],
            ..TrainLog::default()
        };
        let b = TrainLog {
            episode_means: vec![3.0, 4.0],
            ..TrainLog::default()
        };
        let rows = learning_rows("fig3_learning", "pdoo", &[a, b]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean, 2.0);
    }
}
