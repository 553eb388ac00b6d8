//! Figure-analog experiment suites and their plot data.

use std::fs;
use std::path::Path;

use risnoma_core::action::OptimizerProfile;
use risnoma_core::channel::sample_channels;
use risnoma_core::slotopt::{jtac_with, Ablation};
use risnoma_core::SlotProblem;

use crate::bench::bench_policy;
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::export::{
    convergence_rows, emit_plotdata, learning_rows, rho_bucket_rows, summarize, write_reports, PlotRow, FIGURES,
};
use crate::run::{random_policy_log, run_seeds, RunOutput, RunReport};
use crate::scheme::Scheme;
use crate::sweep::{sweep, SweepParam};

/// Arrival bucket width for the depth-versus-arrival rows, bits.
const RHO_BUCKET_BITS: f64 = 250.0;

fn reports(outs: &[RunOutput]) -> Vec<RunReport> {
    outs.iter().map(|o| o.report.clone()).collect()
}

fn tagged(mut outs: Vec<RunOutput>, param: &str, value: f64) -> Vec<RunOutput> {
    for o in &mut outs {
        o.report.param = Some(param.into());
        o.report.value = Some(value);
    }
    outs
}

fn schemes_sweep(cfg: &ExperimentConfig, schemes: &[Scheme], param: SweepParam, values: &[f64]) -> Result<Vec<RunOutput>> {
    let mut out = Vec::new();
    for &s in schemes {
        out.extend(sweep(&cfg.clone().with_scheme(s), param, values)?);
    }
    Ok(out)
}

/// Runs the experiments behind `figure` and returns its plot rows; run
/// reports go to `out/reports/<figure>.toml`.
pub fn run_figure(cfg: &ExperimentConfig, figure: &str, out: &Path) -> Result<Vec<PlotRow>> {
    let mut runs: Vec<RunOutput> = Vec::new();
    let rows = match figure {
        "fig2_convergence" => {
            let mut rows = Vec::new();
            let variants = [
                ("jtac", Ablation::None),
                ("fixed-phase", Ablation::FixedPhase),
                ("fixed-extraction", Ablation::FixedExtraction),
                ("fixed-decoding", Ablation::FixedDecoding),
            ];
            for (name, ablation) in variants {
                let opts = cfg.jtac.options(ablation, false);
                let mut histories = Vec::new();
                for seed in cfg.seed_list() {
                    let st = sample_channels(&cfg.env.geometry, &cfg.env.fading, seed)?;
                    let p = SlotProblem::new(&st, &cfg.env.sys, &cfg.env.sem, cfg.env.arrival_mean.clone());
                    histories.push(jtac_with(&p, &opts)?.history);
                }
                rows.extend(convergence_rows(figure, name, &histories));
            }
            rows
        }
        "fig3_learning" => {
            let mut rows = Vec::new();
            for scheme in [Scheme::Pdoo, Scheme::AllSelection, Scheme::PlainPpo] {
                let outs = run_seeds(&cfg.clone().with_scheme(scheme))?;
                let logs: Vec<_> = outs.iter().filter_map(|o| o.train.clone()).collect();
                rows.extend(learning_rows(figure, scheme.name(), &logs));
                runs.extend(outs);
            }
            let logs = cfg
                .seed_list()
                .into_iter()
                .map(|s| random_policy_log(cfg, Scheme::Pdoo, s, cfg.train_steps))
                .collect::<Result<Vec<_>>>()?;
            rows.extend(learning_rows(figure, "random", &logs));
            rows
        }
        "fig4_ris" => {
            let loops = [Scheme::Alg1Greedy, Scheme::QuantizedPhase, Scheme::NonSemantic, Scheme::FixedPhase];
            runs.extend(schemes_sweep(cfg, &loops, SweepParam::Elements, &[10.0, 30.0, 50.0, 70.0])?);
            runs.extend(schemes_sweep(cfg, &loops, SweepParam::RisX, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])?);
            summarize(figure, &reports(&runs))
        }
        "fig5_deferrable" => {
            let schemes = [Scheme::Pdoo, Scheme::RealtimeExtraction];
            runs.extend(schemes_sweep(cfg, &schemes, SweepParam::ArrivalScale, &[0.5, 1.0, 2.0])?);
            summarize(figure, &reports(&runs))
        }
        "fig6_scaling" => {
            let schemes = [Scheme::Pdoo, Scheme::Alg1Greedy];
            runs.extend(schemes_sweep(cfg, &schemes, SweepParam::Users, &[2.0, 3.0, 4.0, 5.0])?);
            runs.extend(schemes_sweep(cfg, &schemes, SweepParam::NoiseDbm, &[-100.0, -95.0, -90.0, -85.0, -80.0])?);
            summarize(figure, &reports(&runs))
        }
        "fig7_behavior" => {
            runs.extend(run_seeds(&cfg.clone().with_scheme(Scheme::Pdoo))?);
            let traces: Vec<_> = runs.iter().map(|o| o.trace.clone()).collect();
            let mut rows = summarize(figure, &reports(&runs));
            rows.extend(rho_bucket_rows(figure, Scheme::Pdoo.name(), &traces, RHO_BUCKET_BITS));
            rows
        }
        "fig8_modes" => {
            let pdoo = cfg.clone().with_scheme(Scheme::Pdoo);
            runs.extend(tagged(run_seeds(&pdoo.clone().stable_channel_case())?, "case", 1.0));
            runs.extend(tagged(run_seeds(&pdoo.fluctuating_case())?, "case", 2.0));
            summarize(figure, &reports(&runs))
        }
        "fig9_lightweight" => {
            for (i, profile) in [OptimizerProfile::Exact, OptimizerProfile::Lightweight].into_iter().enumerate() {
                let c = cfg.clone().with_scheme(Scheme::Pdoo).with_profile(profile);
                runs.extend(tagged(run_seeds(&c)?, "lightweight", i as f64));
            }
            summarize(figure, &reports(&runs))
        }
        "table3_timing" => timing_rows(cfg, &[10, 70])?,
        other => {
            return Err(HarnessError::Config(format!(
                "unknown figure `{other}`; choose one of: {}",
                FIGURES.join(", ")
            )))
        }
    };
    if !runs.is_empty() {
        let dir = out.join("reports");
        fs::create_dir_all(&dir)?;
        write_reports(&reports(&runs), dir.join(format!("{figure}.toml")))?;
    }
    Ok(rows)
}

/// Decision-time rows for PDOO policies trained at each RIS size.
pub fn timing_rows(cfg: &ExperimentConfig, elements: &[usize]) -> Result<Vec<PlotRow>> {
    let mut rows = Vec::new();
    for &l in elements {
        let c = cfg.clone().with_scheme(Scheme::Pdoo).with_elements(l);
        let mut per_variant: Vec<(String, Vec<f64>)> = Vec::new();
        for seed in c.seed_list() {
            let run = crate::run::run_scheme_seed(&c, seed)?;
            let policy = run.policy.expect("PDOO trains a policy");
            for t in bench_policy(&c.env, &policy, c.eval_slots, seed)? {
                match per_variant.iter_mut().find(|(v, _)| *v == t.variant) {
                    Some((_, xs)) => xs.push(t.mean_secs),
                    None => per_variant.push((t.variant, vec![t.mean_secs])),
                }
            }
        }
        for (variant, xs) in per_variant {
            rows.push(PlotRow {
                figure: "table3_timing".into(),
                scheme: variant,
                param: "elements".into(),
                value: l as f64,
                metric: "mean_secs".into(),
                mean: crate::stats::mean(&xs),
                std: crate::stats::std_dev(&xs),
                n: xs.len(),
            });
        }
    }
    Ok(rows)
}

/// Runs every listed figure and writes `out/plotdata/<figure>.csv`.
pub fn export_figures(cfg: &ExperimentConfig, figures: &[&str], out: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut rows = Vec::new();
    for fig in figures {
        log::info!("running {fig}");
        rows.extend(run_figure(cfg, fig, out)?);
    }
    emit_plotdata(&rows, out.join("plotdata"))
}
