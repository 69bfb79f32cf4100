mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sparsedict::allocator::{
    brute_force_oracle, dijkstra_oracle, min_feasible_alpha, min_feasible_alpha_scan, solve_dp,
    solve_dp_with, Alpha, Dominance, LayerChoices, MckpInstance, CAP_TOL,
};
use sparsedict::profiler::{reference_error, CompressionOption, OptionSet};

fn instance() -> impl Strategy<Value = MckpInstance> {
    (any::<u64>(), any::<bool>()).prop_map(|(seed, large)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::random_instance(&mut rng, 5, 4, large)
    })
}

fn total(r: sparsedict::Result<sparsedict::allocator::AllocationPlan>) -> Option<f64> {
    r.ok().map(|p| p.total_error)
}

#[test]
fn three_layer_hand_instance_through_option_sets() {
    let set = |name: &str, opts: &[(u64, f64)]| OptionSet {
        name: name.into(),
        d1: 4,
        d2: 5,
        candidates_evaluated: opts.len(),
        options: opts
            .iter()
            .map(|&(cost, error)| CompressionOption {
                rank_k: 1,
                s: 1,
                cost,
                ks_ratio: 1.0,
                error,
            })
            .chain(std::iter::once(CompressionOption::identity(4, 5)))
            .collect(),
    };
    let sets = vec![
        set("a", &[(6, 0.5), (12, 0.2)]),
        set("b", &[(6, 0.3), (12, 0.1)]),
        set("c", &[(6, 0.9), (12, 0.4)]),
    ];
    // target 0.5: goal 10 per layer -> 12 is closest everywhere -> (0.2 + 0.1 + 0.4) / 3
    let e_ref = reference_error(&sets, 0.5).unwrap();
    assert!((e_ref - 0.7 / 3.0).abs() < 1e-15);
    let inst = MckpInstance::from_option_sets(&sets, 30, Alpha::Fixed(10.0), e_ref, 60);
    let bf = brute_force_oracle(&inst).unwrap();
    // Budget 30 fits two 12s and one 6; (12, 6, 12) gives 0.9, the next best (6, 12, 12) gives 1.0.
    assert_eq!(bf.choices, vec![1, 0, 1]);
    assert_eq!(solve_dp(&inst).unwrap().choices, bf.choices);
    assert_eq!(dijkstra_oracle(&inst).unwrap().choices, bf.choices);
}

#[test]
fn ties_prefer_larger_kept_then_lexicographic() {
    let inst = MckpInstance {
        layers: vec![
            LayerChoices {
                full_cost: 10,
                options: vec![(3, 0.5), (6, 0.5), (10, 0.5)],
            },
            LayerChoices {
                full_cost: 10,
                options: vec![(2, 0.25), (2, 0.25)],
            },
        ],
        budget_kept: 9,
        alpha: Alpha::Fixed(100.0),
        e_ref: 1.0,
        param_precision: 20,
    };
    let bf = brute_force_oracle(&inst).unwrap();
    assert_eq!(bf.choices, vec![1, 0]);
    assert_eq!(solve_dp(&inst).unwrap().choices, vec![1, 0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn solvers_agree_at_exact_precision(inst in instance()) {
        let bf = total(brute_force_oracle(&inst));
        prop_assert_eq!(bf, total(solve_dp(&inst)));
        prop_assert_eq!(bf, total(dijkstra_oracle(&inst)));
        prop_assert_eq!(bf, total(solve_dp_with(&inst, Dominance::Off)));
    }

    #[test]
    fn equal_error_ties_keep_more_parameters(inst in instance()) {
        if let (Ok(bf), Ok(dp)) = (brute_force_oracle(&inst), solve_dp(&inst)) {
            prop_assert_eq!(bf.total_kept, dp.total_kept);
            let off = solve_dp_with(&inst, Dominance::Off).unwrap();
            prop_assert_eq!(off.total_kept, dp.total_kept);
        }
    }

    #[test]
    fn plans_respect_budget_and_caps(inst in instance(), precision in 1u64..2000) {
        let mut inst = inst;
        inst.param_precision = precision.max(inst.layers.len() as u64);
        if let Ok(p) = solve_dp(&inst) {
            prop_assert!(p.total_kept <= inst.budget_kept);
            let kept: u64 = p.choices.iter().zip(&inst.layers).map(|(&i, l)| l.options[i].0).sum();
            prop_assert_eq!(kept, p.total_kept);
            for (&i, l) in p.choices.iter().zip(&inst.layers) {
                prop_assert!(l.options[i].1 <= p.alpha_used * inst.e_ref + CAP_TOL);
            }
            // coarse DP never beats the optimum
            let exact = MckpInstance { param_precision: inst.p_total(), ..inst.clone() };
            let opt = brute_force_oracle(&exact).unwrap();
            prop_assert!(p.total_error >= opt.total_error - 1e-12);
        }
    }

    #[test]
    fn auto_alpha_matches_scan(inst in instance()) {
        prop_assert_eq!(min_feasible_alpha(&inst).ok(), min_feasible_alpha_scan(&inst).ok());
        if let Ok(a) = min_feasible_alpha(&inst) {
            prop_assert!(inst.feasible_at(a));
        }
    }

    #[test]
    fn error_nonincreasing_in_budget(inst in instance(), extra in 0u64..1000) {
        let inst = MckpInstance { alpha: Alpha::Fixed(100.0), ..inst };
        let bigger = MckpInstance { budget_kept: (inst.budget_kept + extra).min(inst.p_total()), ..inst.clone() };
        let a = solve_dp(&inst).unwrap().total_error;
        let b = solve_dp(&bigger).unwrap().total_error;
        prop_assert!(b <= a);
    }
}
