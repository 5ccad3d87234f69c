use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use skipfree::library::{
    make_birth_death_rates, make_multiclass_queue, random_skip_free, InstanceClass, QueueSpec, RandomSpec, StepAction,
};
use skipfree::reference::{
    discounted_residual, discounted_value_iteration, enumerate_policies, for_each_policy, policy_iteration_average,
    policy_matrix, recurrent_classes, relative_value_iteration, stationary_distribution,
};
use skipfree::transforms::{discount_to_average, recover_discounted_values};
use skipfree::{
    residual, solve_average, solve_communicating, uniformize, ActionSpec, ChainClass, Mdp, Mdp32, Options, Options32,
    RootVariant, Tree,
};

fn instance(seed: u64, chain: bool, states: usize) -> Mdp {
    let spec = if chain {
        RandomSpec::chain(states)
    } else {
        RandomSpec { depth: 3, branching: 3, max_states: states, actions_per_state: 3, class: InstanceClass::Recurrent }
    };
    random_skip_free(seed, &spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reference_solvers_agree(seed in any::<u64>(), chain in any::<bool>(), states in 2usize..=8) {
        let m = instance(seed, chain, states);
        let enumeration = enumerate_policies(&m, false).unwrap();
        let pi = policy_iteration_average(&m).unwrap();
        let rvi = relative_value_iteration(&m, 1e-11, 1_000_000).unwrap();
        for v in RootVariant::ALL {
            let sf = solve_average(&m, &Options::default().with_variant(v)).unwrap();
            prop_assert!((sf.g_star - enumeration.g_star).abs() <= 1e-8);
        }
        prop_assert!((pi.g_star - enumeration.g_star).abs() <= 1e-7);
        prop_assert!((rvi.g_star - enumeration.g_star).abs() <= 1e-7);
        prop_assert!(residual(&m, pi.g_star, &pi.h) <= 1e-8);
    }

    #[test]
    fn relative_costs_step_by_y(seed in any::<u64>(), chain in any::<bool>(), states in 2usize..=8) {
        let m = instance(seed, chain, states);
        let rep = solve_average(&m, &Options::default()).unwrap();
        let tree = m.tree();
        for j in 1..m.num_states() {
            let p = tree.parent(j).unwrap();
            prop_assert!((rep.h_star[j] - rep.h_star[p] - rep.y[j]).abs() <= 1e-9 * (1.0 + rep.y[j].abs()));
            prop_assert!(rep.t[j] >= 1.0);
        }
        // the reported policy attains g*
        let enumeration = enumerate_policies(&m, false).unwrap();
        let pi = stationary_distribution(&m, &rep.policy).unwrap();
        let g: f64 = (0..m.num_states()).map(|i| pi[i] * m.action(i, rep.policy.get(i)).cost()).sum();
        prop_assert!((g - enumeration.g_star).abs() <= 1e-8);
    }

    #[test]
    fn upper_tail_identities(seed in any::<u64>(), states in 2usize..=10) {
        let m = instance(seed, false, states);
        let tree = m.tree();
        for i in 0..m.num_states() {
            for a in 0..m.actions(i).len() {
                let act = m.action(i, a);
                let children: f64 = tree.children(i).iter().map(|&c| m.upper_tail(i, a, c).unwrap()).sum();
                prop_assert!((children + act.to_self() + act.to_parent() - 1.0).abs() <= 1e-9);
                for &k in tree.descendants(i) {
                    let tail = m.upper_tail(i, a, k).unwrap();
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&tail));
                    for &k2 in tree.descendants(k) {
                        prop_assert!(m.upper_tail(i, a, k2).unwrap() <= tail + 1e-15);
                    }
                }
            }
            prop_assert!(m.upper_tail(i, 0, i).is_err());
        }
        for j in 0..m.num_states() {
            prop_assert_eq!(tree.path(0, j).map_or(0, |p| p.len()), tree.level(j));
        }
    }

    #[test]
    fn recurrent_policies_have_one_class_with_root(seed in any::<u64>(), states in 2usize..=6) {
        let m = instance(seed, false, states);
        prop_assert_eq!(m.classify(), ChainClass::Recurrent);
        let mut ok = true;
        for_each_policy(&m, |d| {
            let p = policy_matrix(&m, d).unwrap();
            let classes = recurrent_classes(&p);
            ok &= classes.len() == 1 && classes[0].contains(&0);
            let pi = stationary_distribution(&m, d).unwrap();
            ok &= (pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
            for j in 0..m.num_states() {
                let flow: f64 = (0..m.num_states()).map(|i| pi[i] * p[(i, j)]).sum();
                ok &= (flow - pi[j]).abs() <= 1e-10;
            }
        });
        prop_assert!(ok);
    }

    #[test]
    fn augmentation_structure(seed in any::<u64>(), chain in any::<bool>(), beta in 0.05f64..0.99) {
        let m = instance(seed, chain, 6);
        let aug = discount_to_average(&m, beta).unwrap();
        prop_assert!(aug.mdp.validate().is_ok());
        prop_assert_eq!(aug.added_terminals.len(), m.tree().terminals().len());
        let n = m.num_states();
        for i in 0..n {
            for a in 0..m.actions(i).len() {
                let orig = m.action(i, a).transitions(i, m.tree());
                let new = aug.mdp.action(i, a).transitions(i, aug.mdp.tree());
                for (j, p) in &orig {
                    let q = new.iter().find(|(k, _)| k == j).unwrap().1;
                    prop_assert!((q - beta * p).abs() <= 1e-12);
                }
                let added: f64 = new.iter().filter(|(j, _)| *j >= n).map(|(_, p)| p).sum();
                prop_assert!((added - (1.0 - beta)).abs() <= 1e-12);
            }
        }
        for &e in &aug.added_terminals {
            let act = aug.mdp.action(e, 0);
            prop_assert_eq!(act.cost(), 0.0);
            prop_assert!((act.to_parent() - beta).abs() <= 1e-15);
            prop_assert!(aug.origin[e].is_none());
        }
    }

    #[test]
    fn chain_discounted_values(seed in any::<u64>(), states in 2usize..=7, beta in 0.1f64..0.95) {
        let m = instance(seed, true, states);
        let aug = discount_to_average(&m, beta).unwrap();
        let rep = solve_average(&aug.mdp, &Options::default()).unwrap();
        let v = recover_discounted_values(&aug, &rep).unwrap();
        prop_assert!(discounted_residual(&m, beta, &v) <= 1e-8);
        let dvi = discounted_value_iteration(&m, beta, 1e-10, 1_000_000).unwrap();
        prop_assert!(discounted_residual(&m, beta, &dvi.values) <= 1e-9 * (1.0 + dvi.values.iter().fold(0.0f64, |a, b| a.max(b.abs()))));
        for (a, b) in v.iter().zip(&dvi.values) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn communicating_trace_and_oracle(seed in any::<u64>(), states in 3usize..=7) {
        let spec = RandomSpec { depth: 3, branching: 2, max_states: states, actions_per_state: 3, class: InstanceClass::Communicating };
        let m = random_skip_free(seed, &spec).unwrap();
        for v in RootVariant::ALL {
            let rep = solve_communicating(&m, &Options::default().with_variant(v)).unwrap();
            let g: Vec<f64> = rep.trace.iter().map(|r| r.g).collect();
            prop_assert!(g.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            prop_assert!(rep.iterations as u128 <= m.policy_count());
            prop_assert_eq!(rep.h_star[0], 0.0);
            let oracle = enumerate_policies(&m, true).unwrap();
            prop_assert!((rep.g_star - oracle.g_star).abs() <= 1e-8);
            prop_assert!(residual(&m, rep.g_star, &rep.h_star) <= 1e-8);
        }
    }

    #[test]
    fn single_precision_tracks_double(seed in any::<u64>(), states in 2usize..=6) {
        let m = instance(seed, true, states);
        let m32: Mdp32 = m.cast();
        let r64 = solve_average(&m, &Options::default()).unwrap();
        let r32 = solve_average(&m32, &Options32::default().with_tol(1e-5)).unwrap();
        prop_assert!((r32.g_star as f64 - r64.g_star).abs() <= 1e-3 * (1.0 + r64.g_star.abs()));
    }
}

#[test]
fn queue_state_counts_and_rows() {
    for k in 2..=4usize {
        for cap in 1..=4usize {
            let spec = QueueSpec::new(k, cap, vec![0.2; k], vec!["a".into(), "b".into()], vec![vec![0.5, 1.0]; k]);
            let q = make_multiclass_queue(&spec).unwrap();
            assert_eq!(q.states.len(), (k.pow(cap as u32 + 1) - 1) / (k - 1));
            let (m, _) = uniformize(&q.ct).unwrap();
            for i in 0..m.num_states() {
                for a in m.actions(i) {
                    let s: f64 = a.transitions(i, m.tree()).iter().map(|t| t.1).sum();
                    assert!((s - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn birth_death_service_control() {
    // λ = 1, μ ∈ {1.5, 3}, holding cost i, service cost 0 or 0.8
    let cap = 5;
    let rows: Vec<Vec<StepAction<f64>>> = (0..=cap)
        .map(|i| {
            let up = if i < cap { 1.0 } else { 0.0 };
            let (slow, fast) = if i == 0 { (0.0, 0.0) } else { (1.5, 3.0) };
            vec![StepAction::new("slow", up, 0.0, slow, i as f64), StepAction::new("fast", up, 0.0, fast, i as f64 + 0.8)]
        })
        .collect();
    let ct = make_birth_death_rates(&rows).unwrap();
    let (m, lambda) = uniformize(&ct).unwrap();
    assert_eq!(lambda, 4.0);
    let rep = solve_average(&m, &Options::default()).unwrap();
    let oracle = enumerate_policies(&m, false).unwrap();
    assert_abs_diff_eq!(rep.g_star, oracle.g_star, epsilon = 1e-9);
}

#[test]
fn continuous_gain_is_discrete_gain_over_lambda() {
    // two-state process: 0 -> 1 at rate 1 (cost rate 0), 1 -> 0 at rate 2 (cost rate 3);
    // time in 1 is a third, so the long-run cost per unit time is 1
    let rows = vec![
        vec![StepAction::new("a", 1.0, 0.0, 0.0, 0.0)],
        vec![StepAction::new("a", 0.0, 0.0, 2.0, 3.0)],
    ];
    let (m, lambda) = uniformize(&make_birth_death_rates(&rows).unwrap()).unwrap();
    let rep = solve_average(&m, &Options::default()).unwrap();
    assert_abs_diff_eq!(rep.g_star / lambda, 1.0, epsilon = 1e-12);
}

#[test]
fn discounted_two_policy_chain() {
    let m = Mdp::new(
        Tree::chain(1),
        vec![
            vec![ActionSpec::new("a", 0.0, vec![(0, 0.5), (1, 0.5)])],
            vec![ActionSpec::new("a", 2.0, vec![(0, 0.5), (1, 0.5)]), ActionSpec::new("b", 2.4, vec![(0, 1.0)])],
        ],
    )
    .unwrap();
    let aug = discount_to_average(&m, 0.5).unwrap();
    let rep = solve_average(&aug.mdp, &Options::default()).unwrap();
    let v = recover_discounted_values(&aug, &rep).unwrap();
    let dvi = discounted_value_iteration(&m, 0.5, 1e-12, 10_000).unwrap();
    for (a, b) in v.iter().zip(&dvi.values) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
    }
    // v_M = x'/(1-β) - y'_{M+1}
    assert_abs_diff_eq!(v[1], rep.g_star / 0.5 - rep.y[2], epsilon = 1e-12);
}

#[test]
fn communicating_example_enumeration() {
    let m = Mdp::new(
        Tree::chain(2),
        vec![
            vec![ActionSpec::new("a", 5.0, vec![(1, 1.0)])],
            vec![ActionSpec::new("a", 0.0, vec![(0, 1.0)]), ActionSpec::new("b", 0.0, vec![(2, 1.0)])],
            vec![ActionSpec::new("a", 1.0, vec![(1, 1.0)])],
        ],
    )
    .unwrap();
    assert_abs_diff_eq!(enumerate_policies(&m, true).unwrap().g_star, 0.5, epsilon = 1e-12);
}
