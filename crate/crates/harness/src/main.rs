use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use risnoma_core::action::OptimizerProfile;
use risnoma_harness::export::{emit_plotdata, summarize, write_reports, write_trace_csv, write_train_log, FIGURES};
use risnoma_harness::suite::{export_figures, timing_rows};
use risnoma_harness::{run_seeds, sweep, ExperimentConfig, RunOutput, Scheme, SweepParam};

#[derive(Parser)]
#[command(name = "risnoma", about = "RIS-assisted semantic NOMA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Exact,
    Lightweight,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    /// Training steps for learned schemes.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.scheme {
            cfg.scheme = s.parse::<Scheme>()?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.seeds {
            cfg.seeds = n;
        }
        if let Some(p) = self.profile {
            cfg.env.profile = match p {
                Profile::Exact => OptimizerProfile::Exact,
                Profile::Lightweight => OptimizerProfile::Lightweight,
            };
        }
        if let Some(n) = self.steps {
            cfg.train_steps = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train (if needed) and evaluate one scheme over the configured seeds.
    Run(Common),
    /// Paired-seed sweep of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// elements, ris_x, arrival_scale, users or noise_dbm.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Per-step decision time of trained PDOO policies.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "10,70")]
        elements: Vec<usize>,
    },
    /// Run figure-analog suites and write plot data.
    Export {
        #[command(flatten)]
        common: Common,
        /// Comma-separated figure names, or `all`.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        figures: Vec<String>,
    },
}

fn save_runs(outs: &[RunOutput], dir: &Path, stem: &str) -> anyhow::Result<()> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    let mut reports = Vec::new();
    for o in outs {
        let tag = match o.report.value {
            Some(v) => format!("{}_{}{v}_s{}", o.report.scheme, o.report.param.as_deref().unwrap_or(""), o.report.seed),
            None => format!("{}_s{}", o.report.scheme, o.report.seed),
        };
        let path = traces.join(format!("{tag}.csv"));
        write_trace_csv(&o.trace, &path)?;
        if let Some(log) = &o.train {
            write_train_log(log, &traces, &tag)?;
        }
        let mut r = o.report.clone();
        r.trace_path = Some(path);
        reports.push(r);
    }
    write_reports(&reports, dir.join(format!("{stem}.toml")))?;
    for r in &reports {
        println!(
            "{:<20} seed {:<4} {}ee {:>9.2}  eta {:>9.2}  reward {:>10.2}  compliance {:.3}  step {:.2e} s",
            r.scheme,
            r.seed,
            r.value.map(|v| format!("{}={v}  ", r.param.as_deref().unwrap_or(""))).unwrap_or_default(),
            r.energy_efficiency,
            r.mean_eta,
            r.mean_reward,
            r.window_compliance,
            r.mean_decision_secs
        );
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(c) => {
            let cfg = c.config()?;
            let outs = run_seeds(&cfg)?;
            save_runs(&outs, &c.out, "reports")?;
        }
        Command::Sweep { common, param, values } => {
            let cfg = common.config()?;
            let p: SweepParam = param.parse()?;
            let outs = sweep(&cfg, p, &values)?;
            save_runs(&outs, &common.out, &format!("sweep_{}", p.name()))?;
            let reports: Vec<_> = outs.iter().map(|o| o.report.clone()).collect();
            emit_plotdata(&summarize(&format!("sweep_{}", p.name()), &reports), common.out.join("plotdata"))?;
        }
        Command::Bench { common, elements } => {
            let cfg = common.config()?;
            let rows = timing_rows(&cfg, &elements)?;
            for r in &rows {
                println!("L={:<3} {:<14} {:.3e} s/step (std {:.1e}, n {})", r.value, r.scheme, r.mean, r.std, r.n);
            }
            let paths = emit_plotdata(&rows, common.out.join("plotdata"))?;
            println!("wrote {}", paths[0].display());
        }
        Command::Export { common, figures } => {
            let cfg = common.config()?;
            let names: Vec<&str> = if figures.iter().any(|f| f == "all") {
                FIGURES.to_vec()
            } else {
                figures.iter().map(String::as_str).collect()
            };
            if let Some(bad) = names.iter().find(|n| !FIGURES.contains(n)) {
                bail!("unknown figure `{bad}`; choose from {}", FIGURES.join(", "));
            }
            let paths = export_figures(&cfg, &names, &common.out).context("figure export failed")?;
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
