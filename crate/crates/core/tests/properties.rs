use cash_core::adversary::{enumerate_vertices, feasible_region, max_budget_factor, p_adv_at_beta, strategy_payoff};
use cash_core::mechanism::{exponential_distribution, fit_k, privacy_ratio, validate, StoppingDistribution};
use cash_core::outcome_space::{
    classify_outcomes, stopping_time, stopping_time_from_residues, Digest, DigestChain, OutcomeSpace,
};
use proptest::prelude::*;

fn space_strategy() -> impl Strategy<Value = OutcomeSpace> {
    prop::collection::vec(2u64..6, 1..4).prop_map(|m| OutcomeSpace::new(m).unwrap())
}

fn chain_for(space: &OutcomeSpace, seeds: &[u64]) -> DigestChain {
    DigestChain::new(
        (0..space.slots())
            .map(|i| {
                let mut bytes = [0u8; 32];
                let s = seeds[i % seeds.len()].wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64);
                for (j, b) in bytes.iter_mut().enumerate() {
                    *b = (s.rotate_left(j as u32 * 5) >> 7) as u8;
                }
                Digest(bytes)
            })
            .collect(),
    )
}

fn dist_strategy(rounds: usize) -> impl Strategy<Value = StoppingDistribution> {
    prop::collection::vec(0.05f64..1.0, rounds).prop_map(move |w| {
        let space = OutcomeSpace::uniform(rounds).unwrap();
        let mass: f64 = w.iter().zip(space.class_sizes()).map(|(w, &o)| w * o as f64).sum();
        StoppingDistribution::new(space, w.iter().map(|x| x / mass).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_matches_class_sizes(space in space_strategy(), seeds in prop::collection::vec(any::<u64>(), 1..4)) {
        let chain = chain_for(&space, &seeds);
        let classes = classify_outcomes(&chain, &space).unwrap();
        let sizes: Vec<u64> = classes.iter().map(|c| c.len() as u64).collect();
        prop_assert_eq!(&sizes[..], space.class_sizes());
        for (j, class) in classes.iter().enumerate() {
            for o in class {
                prop_assert_eq!(stopping_time(o, &chain), j + 1);
            }
        }
    }

    #[test]
    fn stopping_time_agrees_with_residues(space in space_strategy(), seeds in prop::collection::vec(any::<u64>(), 1..4), idx in any::<u64>()) {
        let chain = chain_for(&space, &seeds);
        let outcome = space.outcome_at(idx % space.total_outcomes());
        let firing = chain.firing_residues(&space);
        prop_assert_eq!(stopping_time(&outcome, &chain), stopping_time_from_residues(&outcome, &firing));
    }

    #[test]
    fn exponential_tilts_monotonically(rounds in 2usize..5, a in 0.0f64..4.0, delta in 0.01f64..2.0) {
        let space = OutcomeSpace::uniform(rounds).unwrap();
        let lo = exponential_distribution(a, &space).unwrap();
        let hi = exponential_distribution(a + delta, &space).unwrap();
        prop_assert!(hi.stop_probs()[0] > lo.stop_probs()[0]);
        prop_assert!(hi.stop_probs()[rounds - 1] < lo.stop_probs()[rounds - 1]);
        prop_assert!((hi.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((privacy_ratio(&hi) - (a + delta).exp()).abs() <= 1e-12 * (a + delta).exp());
    }

    #[test]
    fn fit_k_is_the_largest_affordable(rounds in 2usize..5, eps in 0.0f64..3.0, cost in 3.0f64..1e7) {
        let space = OutcomeSpace::uniform(rounds).unwrap();
        let dist = exponential_distribution(eps, &space).unwrap();
        let e = dist.expected_rounds();
        match fit_k(&dist, cost) {
            Ok(k) => {
                prop_assert!(k as f64 * e <= cost * (1.0 + 1e-12));
                prop_assert!((k + 1) as f64 * e > cost);
                prop_assert!(validate(&dist, eps, cost, k).all_pass());
            }
            Err(_) => prop_assert!(e > cost),
        }
    }

    #[test]
    fn p_adv_nondecreasing_in_budget(dist in dist_strategy(3), a in 0.0f64..2.3, b in 0.0f64..2.3) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(p_adv_at_beta(&dist, lo) <= p_adv_at_beta(&dist, hi) + 1e-12);
    }

    #[test]
    fn p_adv_nondecreasing_two_rounds(dist in dist_strategy(2), a in 0.0f64..1.7, b in 0.0f64..1.7) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(p_adv_at_beta(&dist, lo) <= p_adv_at_beta(&dist, hi) + 1e-12);
    }

    #[test]
    fn vertices_are_feasible_and_dominate(dist in dist_strategy(3), beta in 0.05f64..2.1, w in prop::collection::vec(0.0f64..1.0, 3)) {
        prop_assume!(beta < max_budget_factor(dist.space()));
        let region = feasible_region(dist.space(), beta);
        let vertices = enumerate_vertices(&region).unwrap();
        prop_assert!(!vertices.is_empty());
        for v in &vertices {
            prop_assert!(region.contains(&v.0, 1e-9));
        }
        // any convex combination scores no higher than the best vertex
        let total: f64 = w.iter().take(vertices.len()).sum::<f64>().max(1e-9);
        let mut mix = vec![0.0; 3];
        for (v, wi) in vertices.iter().zip(&w) {
            for (m, x) in mix.iter_mut().zip(&v.0) {
                *m += wi / total * x;
            }
        }
        if w.iter().take(vertices.len()).sum::<f64>() > 1e-9 {
            let best = vertices.iter().map(|v| strategy_payoff(&v.0, &dist)).fold(f64::MIN, f64::max);
            prop_assert!(strategy_payoff(&mix, &dist) <= best + 1e-12);
        }
    }
}
