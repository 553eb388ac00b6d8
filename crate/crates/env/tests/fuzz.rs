use proptest::prelude::*;
use risnoma_core::action::OptimizerChoice;
use risnoma_core::channel::Geometry;
use risnoma_env::{EnvConfig, ExtractionMode, LearnedAction, SemanticNomaEnv};

fn config(mode: ExtractionMode) -> EnvConfig {
    EnvConfig {
        geometry: Geometry::scattered(3, 8, 1.0, 11).unwrap(),
        mode,
        ..EnvConfig::default()
    }
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => -500.0..5000.0f64,
        1 => Just(f64::NAN),
        1 => Just(f64::INFINITY),
        1 => Just(0.0),
    ]
}

fn action() -> impl Strategy<Value = LearnedAction> {
    (
        prop::collection::vec(value(), 3),
        prop::collection::vec(value(), 3),
        prop::collection::vec(any::<bool>(), 3),
        0usize..3,
    )
        .prop_map(|(extract, transmit, schedule, m)| LearnedAction {
            extract,
            transmit,
            schedule,
            mode: OptimizerChoice::ALL[m],
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backlogs_stay_nonnegative_and_records_finite(
        seed in 0u64..1000,
        deferrable in any::<bool>(),
        actions in prop::collection::vec(action(), 1..60),
    ) {
        let mode = if deferrable { ExtractionMode::Deferrable } else { ExtractionMode::Realtime };
        let mut env = SemanticNomaEnv::new(config(mode)).unwrap();
        env.reset(seed).unwrap();
        let mut arrived = [0.0f64; 3];
        for a in &actions {
            let r = env.step(a).unwrap().record;
            for k in 0..3 {
                arrived[k] += r.arrivals[k];
                prop_assert!(r.raw_backlog[k] >= 0.0 && r.sem_backlog[k] >= 0.0);
                // nothing is created out of thin air
                prop_assert!(r.raw_backlog[k] <= arrived[k] + 1e-6);
                prop_assert!(r.capacities[k] <= r.targets[k] + 1e-9);
            }
            prop_assert!(r.reward.is_finite() && r.eta >= 0.0 && r.energy >= 0.0);
            prop_assert!(r.rho.iter().all(|&p| (0.2..=1.0).contains(&p)));
            prop_assert!(r.observation.iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn config_rejects_mismatched_arrivals() {
    let cfg = EnvConfig {
        arrival_mean: vec![1000.0; 2],
        ..EnvConfig::default()
    };
    assert!(SemanticNomaEnv::new(cfg).is_err());
    let cfg = EnvConfig {
        window: 0,
        ..EnvConfig::default()
    };
    assert!(SemanticNomaEnv::new(cfg).is_err());
}

#[test]
fn default_config_matches_parameter_table() {
    let cfg = EnvConfig::default();
    assert_eq!(cfg.num_users(), 3);
    assert_eq!(cfg.num_elements(), 70);
    assert_eq!(cfg.sem.rho_min, 0.2);
    assert_eq!(cfg.sys.s_min, 100.0);
    assert_eq!(cfg.b_max, 3000.0);
    assert!((cfg.sys.p_max - 10.0).abs() < 1e-12);
    assert!((cfg.sys.noise_power - 1e-12).abs() < 1e-24);
    assert_eq!(cfg.obs_dim(), 13);
}
