use proptest::prelude::*;
use stagematch::baselines::{
    blocking_pairs, deferred_acceptance, deferred_acceptance_ordered, RandomProposing, SimpleCutoff, DaInstance,
};
use stagematch::calibration::{calibrate_average, calibrate_minimax, CalibrationProblem, StateDistribution};
use stagematch::market::{AgentProfile, Arm, ArmUtilities, Strategy as MarketStrategy};
use stagematch::metrics::{envy_band_width, replay_comparison};
use stagematch::stats::derive_seed;
use stagematch::variational::{
    brute_force_optimal, greedy_select_terms, select_terms, state_grid, variational_loss, ArmTerm, LogisticSurface,
    SurfaceCurves,
};

fn terms() -> impl Strategy<Value = Vec<ArmTerm>> {
    prop::collection::vec((0.1f64..5.0, 0.01f64..1.0, 0.0f64..0.5), 1..=10).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(id, (weight, pi, delta))| ArmTerm { id, weight, pi, delta: delta.min(pi) })
            .collect()
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn da_instance(agents: usize, arms: usize) -> impl Strategy<Value = DaInstance> {
    (
        prop::collection::vec(1usize..=3, agents),
        prop::collection::vec(permutation(arms), agents),
        prop::collection::vec(permutation(agents), arms),
    )
        .prop_map(|(q, a, b)| DaInstance::new(q, a, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_slack_is_bounded(terms in terms(), eta in 0.0f64..0.5, quota in 1usize..5, penalty in 5.0f64..12.0) {
        let greedy = greedy_select_terms(&terms, eta, quota, penalty);
        let chosen = select_terms(&terms, &greedy.selected);
        let greedy_loss = variational_loss(&chosen, eta, 0, quota, penalty);
        let (_, best) = brute_force_optimal(&terms, eta, 0, quota, penalty).unwrap();
        let gap = greedy_loss - best;
        prop_assert!(gap >= 0.0);
        prop_assert!(gap <= greedy.ue_dagger, "gap {} > UE {}", gap, greedy.ue_dagger);
    }

    #[test]
    fn greedy_selection_is_sorted_and_within_candidates(terms in terms(), eta in 0.0f64..0.5, quota in 0usize..5) {
        let greedy = greedy_select_terms(&terms, eta, quota, 6.0);
        prop_assert!(greedy.selected.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(greedy.selected.iter().all(|&id| id < terms.len()));
        if quota == 0 {
            prop_assert!(greedy.selected.is_empty());
        }
    }

    #[test]
    fn deferred_acceptance_is_stable(inst in da_instance(6, 6)) {
        let matching = deferred_acceptance(&inst).unwrap();
        prop_assert!(blocking_pairs(&inst, &matching).is_empty());
        for (i, &q) in inst.agent_quotas.iter().enumerate() {
            prop_assert!(matching.values().filter(|&&a| a == i).count() <= q);
        }
    }

    #[test]
    fn deferred_acceptance_ignores_proposal_order(inst in da_instance(4, 7), order in permutation(7)) {
        prop_assert_eq!(deferred_acceptance(&inst).unwrap(), deferred_acceptance_ordered(&inst, &order).unwrap());
    }

    #[test]
    fn band_width_is_monotone_in_eta(b_hat in 0.5f64..5.0, level in 0.0f64..2.0, a in 0.0f64..0.4, b in 0.0f64..0.4) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let w_lo = envy_band_width(b_hat, b_hat, lo, level).unwrap();
        let w_hi = envy_band_width(b_hat, b_hat, hi, level).unwrap();
        prop_assert!(w_lo <= w_hi);
        prop_assert!(w_lo >= 0.0);
    }

    #[test]
    fn derived_seeds_are_stable(master in any::<u64>(), stream in 0u64..8, rep in 0u64..1000) {
        prop_assert_eq!(derive_seed(master, stream, rep), derive_seed(master, stream, rep));
        prop_assert_ne!(derive_seed(master, stream, rep), derive_seed(master, stream, rep + 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn calibrated_states_stay_in_the_unit_interval(
        arms in prop::collection::vec((0.5f64..3.0, 0.0f64..1.0), 3..12),
        draws in prop::collection::vec(0.0f64..1.0, 5..20),
        eta in 0.0f64..0.3,
        quota in 1usize..4,
    ) {
        let surface = LogisticSurface { state_coef: 2.5, score_coef: 1.0, intercept: -1.0 };
        let candidates: Vec<(usize, f64, f64)> =
            arms.iter().enumerate().map(|(id, &(w, v))| (id, w, v)).collect();
        let grid = state_grid(21);
        let curves = SurfaceCurves::new(&surface, &candidates, &grid).unwrap();
        let dist = StateDistribution::empirical(&draws).unwrap();
        let problem = CalibrationProblem::new(&curves, &dist, eta, 4.0, quota);
        for s in [calibrate_average(&problem).unwrap().state, calibrate_minimax(&problem).unwrap().state] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn replaying_single_stage_pulls_never_hurts(
        utilities in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 4..10),
        arm_values in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 10),
        quotas in prop::collection::vec(1usize..3, 3),
        random in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let arms: Vec<Arm> = utilities.iter().enumerate().map(|(j, u)| Arm::new(j, 1.0, u.clone())).collect();
        let agents: Vec<AgentProfile> = quotas.iter().enumerate().map(|(i, &q)| AgentProfile::new(i, q, 10.0, 3)).collect();
        let values = (0..arms.len()).map(|j| arm_values[j].iter().map(|&v| Some(v)).collect()).collect();
        let prefs = ArmUtilities::from_values(0.5, values);
        let factory = |_: usize| -> Box<dyn MarketStrategy> {
            if random { Box::new(RandomProposing) } else { Box::new(SimpleCutoff) }
        };
        let (single, multi) = replay_comparison(&arms, &agents, &prefs, 3, seed, factory).unwrap();
        for i in 0..agents.len() {
            prop_assert!(multi.payoffs[i] >= single.payoffs[i] - 1e-12);
        }
    }
}
