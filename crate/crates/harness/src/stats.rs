//! Trace summaries.

use risnoma_env::EpisodeTrace;

/// Selection frequency of modes 1, 2, 3 over slots that dispatched a single
/// mode. All zeros when none did.
pub fn mode_histogram(trace: &EpisodeTrace) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for r in trace.records() {
        if (1..=3).contains(&r.mode) {
            counts[r.mode - 1] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return [0.0; 3];
    }
    counts.map(|c| c as f64 / n as f64)
}

/// Mean depth over scheduled SU-slots, or over all SU-slots when nothing
/// was scheduled.
pub fn mean_rho(trace: &EpisodeTrace) -> f64 {
    let pairs = || trace.records().iter().flat_map(|r| r.rho.iter().zip(&r.scheduled));
    let sched: Vec<f64> = pairs().filter(|(_, &s)| s).map(|(&p, _)| p).collect();
    if sched.is_empty() {
        mean(&pairs().map(|(&p, _)| p).collect::<Vec<_>>())
    } else {
        mean(&sched)
    }
}

/// Mean depth of scheduled SUs grouped by that SU's arrival in the slot;
/// returns `(bucket lower edge, mean depth, count)` for non-empty buckets.
pub fn rho_by_arrival(trace: &EpisodeTrace, width: f64) -> Vec<(f64, f64, usize)> {
    let mut buckets: std::collections::BTreeMap<i64, (f64, usize)> = Default::default();
    for r in trace.records() {
        for ((&a, &p), &s) in r.arrivals.iter().zip(&r.rho).zip(&r.scheduled) {
            if s {
                let e = buckets.entry((a / width).floor() as i64).or_default();
                e.0 += p;
                e.1 += 1;
            }
        }
    }
    buckets
        .into_iter()
        .map(|(b, (sum, n))| (b as f64 * width, sum / n as f64, n))
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use risnoma_env::{run_policy, EnvConfig, SemanticNomaEnv};
    use rand::SeedableRng;

    fn random_trace(slots: usize, seed: u64) -> EpisodeTrace {
        let mut cfg = EnvConfig::default();
        cfg.geometry.ris_elements = 4;
        cfg.profile = risnoma_core::action::OptimizerProfile::Lightweight;
        let mut env = SemanticNomaEnv::new(cfg).unwrap();
        let probe = env.clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        run_policy(&mut env, &mut |_: &risnoma_env::Observation| probe.random_action(&mut rng), slots, seed).unwrap()
    }

    #[test]
    fn random_modes_are_near_uniform() {
        let n = 3000;
        let h = mode_histogram(&random_trace(n, 5));
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // three binomial standard deviations at p = 1/3
        let bound = 3.0 * ((1.0 / 3.0) * (2.0 / 3.0) / n as f64).sqrt();
        for f in h {
            assert!((f - 1.0 / 3.0).abs() < bound, "{h:?}");
        }
    }

    #[test]
    fn empty_trace_has_no_modes() {
        assert_eq!(mode_histogram(&EpisodeTrace::new()), [0.0; 3]);
        assert_eq!(mean_rho(&EpisodeTrace::new()), 0.0);
    }

    #[test]
    fn sample_moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((std_dev(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-12);
        assert_eq!(std_dev(&[4.0]), 0.0);
    }

    #[test]
    fn arrival_buckets_cover_all_scheduled_slots() {
        let t = random_trace(200, 1);
        let buckets = rho_by_arrival(&t, 250.0);
        let total: usize = buckets.iter().map(|b| b.2).sum();
        let sched = t.records().iter().flat_map(|r| &r.scheduled).filter(|&&s| s).count();
        assert_eq!(total, sched);
        assert!(buckets.iter().all(|b| (0.2..=1.0).contains(&b.1)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn histogram_sums_to_one(seed in 0u64..1000, slots in 1usize..60) {
            let h = mode_histogram(&random_trace(slots, seed));
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(h.iter().all(|&f| (0.0..=1.0).contains(&f)));
        }
    }
}
