use proptest::prelude::*;
use risnoma_core::action::{OptimizerChoice, OptimizerProfile, SlotAction};
use risnoma_core::channel::{compose_equivalent, sample_channels, FadingParams, Geometry};
use risnoma_core::noma::{min_power_for_targets, su_capacities, sum_capacity, DecodingOrder};
use risnoma_core::params::SystemParams;
use risnoma_core::semantic::SemanticParams;
use risnoma_core::slotopt::{all_selection, dispatch, jtac_alternating, slot_efficiency};
use risnoma_core::SlotProblem;

fn parts(k: usize, l: usize, seed: u64) -> (risnoma_core::ChannelState64, SystemParams<f64>, SemanticParams<f64>) {
    let g = Geometry::scattered(k, l, 1.0, seed).unwrap();
    let st = sample_channels(&g, &FadingParams::default(), seed).unwrap();
    (st, SystemParams::default(), SemanticParams::default())
}

#[test]
fn loop_output_is_self_consistent() {
    for seed in 0..4 {
        let (st, sys, sem) = parts(3, 20, seed);
        let p = SlotProblem::new(&st, &sys, &sem, vec![800.0, 1000.0, 1200.0]);
        let out = jtac_alternating(&p, 1e-3, 10).unwrap();
        let h = compose_equivalent(&st, &out.action.phases).unwrap();
        let caps = su_capacities(&h, &out.action.power, &out.action.order, &sys).unwrap();
        for (a, b) in caps.iter().zip(&out.capacities) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
        // the loop scores semantic bits per joule; the slot metric counts recovered raw bits
        let (eta, _, energy) = slot_efficiency(&p, &out.action).unwrap();
        let semantic = caps.iter().sum::<f64>() / energy;
        assert!((semantic - out.efficiency).abs() <= 1e-9 * semantic.max(1.0), "{semantic} vs {}", out.efficiency);
        assert!(eta >= semantic);
    }
}

#[test]
fn all_selection_is_no_worse_than_any_single_mode() {
    for seed in 0..4 {
        let (st, sys, sem) = parts(3, 16, seed);
        let p = SlotProblem::new(&st, &sys, &sem, vec![600.0; 3]);
        let start = SlotAction::initial(3, 16, sem.rho_min, sys.p_max);
        let all = all_selection(&p, &start, OptimizerProfile::Exact, 1e-3, 5).unwrap();
        let best_all = slot_efficiency(&p, &all.action).unwrap().0;
        let first = dispatch(OptimizerChoice::Extraction, &p, &start, OptimizerProfile::Exact).unwrap();
        assert!(best_all >= slot_efficiency(&p, &first.action).unwrap().0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn minimal_powers_deliver_targets_and_telescope(
        seed in 0u64..10_000,
        targets in prop::collection::vec(100.0f64..600.0, 2..5),
    ) {
        let k = targets.len();
        let (st, sys, _) = parts(k, 12, seed);
        let h = st.h_direct.clone();
        let order = DecodingOrder::identity(k);
        let pc = min_power_for_targets(&h, &order, &targets, &vec![true; k], &sys).unwrap();
        let caps = su_capacities(&h, &pc.profile, &order, &sys).unwrap();
        if pc.feasible {
            for (c, t) in caps.iter().zip(&targets) {
                prop_assert!(*c >= t * (1.0 - 1e-9));
            }
        }
        prop_assert!(pc.profile.power.iter().all(|&p| p <= sys.p_max * (1.0 + 1e-9)));
        let total: f64 = caps.iter().sum();
        let closed = sum_capacity(&h, &pc.profile, &sys).unwrap();
        prop_assert!((total - closed).abs() <= 1e-9 * closed.max(1.0));
    }
}
