//! Paired-seed parameter sweeps.

use std::fmt;
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::run::{run_scheme_seed, RunOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    /// RIS element count `L`.
    Elements,
    /// RIS x-coordinate in meters.
    RisX,
    /// Multiple of the default mean arrival.
    ArrivalScale,
    /// Number of SUs `K`.
    Users,
    /// Noise power in dBm.
    NoiseDbm,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [Self::Elements, Self::RisX, Self::ArrivalScale, Self::Users, Self::NoiseDbm];

    pub fn name(self) -> &'static str {
        match self {
            Self::Elements => "elements",
            Self::RisX => "ris_x",
            Self::ArrivalScale => "arrival_scale",
            Self::Users => "users",
            Self::NoiseDbm => "noise_dbm",
        }
    }

    /// `cfg` with the parameter set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let whole = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(HarnessError::Config(format!("{} needs a positive integer, got {v}", self.name())))
            }
        };
        let c = cfg.clone();
        let out = match self {
            Self::Elements => c.with_elements(whole(value)?),
            Self::RisX => c.with_ris_x(value),
            Self::ArrivalScale => c.with_arrival_scale(value),
            Self::Users => c.with_users(whole(value)?)?,
            Self::NoiseDbm => c.with_noise_dbm(value),
        };
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match key.as_str() {
            "l" => "elements",
            "k" => "users",
            "arrival" | "arrival_rate" => "arrival_scale",
            "sigma2" | "noise" => "noise_dbm",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|p| p.name() == alias)
            .ok_or_else(|| HarnessError::NotSweepable {
                given: s.to_string(),
                choices: Self::ALL.iter().map(|p| p.name()).collect::<Vec<_>>().join(", "),
            })
    }
}

/// One run per value and seed. Every value uses the same seeds, so
/// differences between points come from the parameter alone.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<RunOutput>> {
    let mut out = Vec::with_capacity(values.len() * cfg.seeds);
    for &v in values {
        let point = param.apply(cfg, v)?;
        for seed in cfg.seed_list() {
            let mut run = run_scheme_seed(&point, seed)?;
            run.report.param = Some(param.name().into());
            run.report.value = Some(v);
            out.push(run);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::Scheme;

    #[test]
    fn names_and_aliases_parse() {
        for p in SweepParam::ALL {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
        assert_eq!("L".parse::<SweepParam>().unwrap(), SweepParam::Elements);
        assert_eq!("K".parse::<SweepParam>().unwrap(), SweepParam::Users);
        let err = "p_max".parse::<SweepParam>().unwrap_err().to_string();
        assert!(err.contains("ris_x") && err.contains("p_max"));
    }

    #[test]
    fn integer_parameters_reject_fractions() {
        let cfg = ExperimentConfig::default();
        assert!(SweepParam::Elements.apply(&cfg, 10.5).is_err());
        assert!(SweepParam::Users.apply(&cfg, 0.0).is_err());
        assert_eq!(SweepParam::Users.apply(&cfg, 4.0).unwrap().env.num_users(), 4);
    }

    #[test]
    fn sweep_labels_and_pairs_seeds() {
        let mut cfg = ExperimentConfig::default().with_scheme(Scheme::Random).with_elements(4);
        cfg.seeds = 2;
        cfg.eval_slots = 10;
        let runs = sweep(&cfg, SweepParam::RisX, &[2.0, 6.0]).unwrap();
        assert_eq!(runs.len(), 4);
        let seeds: Vec<u64> = runs.iter().map(|r| r.report.seed).collect();
        assert_eq!(seeds, vec![42, 43, 42, 43]);
        assert!(runs.iter().all(|r| r.report.param.as_deref() == Some("ris_x")));
        assert_eq!(runs[2].report.value, Some(6.0));
    }
}
