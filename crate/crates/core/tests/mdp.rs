#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use frflow_core::lp_geometry::{enumerate_vertices, rate_constants};
use frflow_core::mdp::*;
use frflow_core::measures::Distribution;
use frflow_core::Error;
use proptest::prelude::*;
use rand::Rng;

/// Unnormalized state occupancy by the geometric series, truncated.
fn series_state_occupancy(mdp: &Mdp, pi: &Policy, horizon: usize) -> Vec<f64> {
    let (s_n, a_n, g) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    let mut current = mdp.initial().weights().to_vec();
    let mut total = vec![0.0; s_n];
    let mut weight = 1.0 - g;
    for _ in 0..=horizon {
        total.iter_mut().zip(&current).for_each(|(t, c)| *t += weight * c);
        let mut next = vec![0.0; s_n];
        for s in 0..s_n {
            for a in 0..a_n {
                let p = current[s] * pi.prob(s, a);
                for (n, q) in next.iter_mut().zip(mdp.next_states(s, a)) {
                    *n += p * q;
                }
            }
        }
        current = next;
        weight *= g;
    }
    total
}

/// Normalized values of a policy from `(I − γP_π) V = (1−γ) r_π`.
fn evaluate(mdp: &Mdp, actions: &[usize]) -> Vec<f64> {
    let (s_n, g) = (mdp.num_states(), mdp.discount());
    let mut a = vec![vec![0.0; s_n]; s_n];
    let mut b = vec![0.0; s_n];
    for s in 0..s_n {
        a[s][s] += 1.0;
        for (t, p) in mdp.next_states(s, actions[s]).iter().enumerate() {
            a[s][t] -= g * p;
        }
        b[s] = (1.0 - g) * mdp.reward(s, actions[s]);
    }
    gauss_solve(a, b).unwrap()
}

/// Howard policy iteration started from action 0 everywhere.
fn policy_iteration(mdp: &Mdp) -> (Vec<usize>, Vec<f64>) {
    let (s_n, a_n, g) = (mdp.num_states(), mdp.num_actions(), mdp.discount());
    let mut actions = vec![0; s_n];
    loop {
        let v = evaluate(mdp, &actions);
        let mut changed = false;
        for s in 0..s_n {
            let q = |a: usize| {
                (1.0 - g) * mdp.reward(s, a) + g * mdp.next_states(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>()
            };
            let best = (0..a_n).fold(actions[s], |b, a| if q(a) > q(b) + 1e-13 { a } else { b });
            if best != actions[s] {
                actions[s] = best;
                changed = true;
            }
        }
        if !changed {
            return (actions, v);
        }
    }
}

fn random_policy(r: &mut impl Rng, s_n: usize, a_n: usize) -> Policy {
    let mut probs = Vec::new();
    for _ in 0..s_n {
        probs.extend(random_distribution(r, a_n));
    }
    Policy::new(s_n, a_n, probs).unwrap()
}

#[test]
fn example_rewards_of_deterministic_policies() {
    let mdp = two_state_mdp(0.0);
    let cases = [([0, 0], 1.2), ([0, 1], 0.98), ([1, 0], 1.84), ([1, 1], 0.0)];
    for (actions, expected) in cases {
        let r = reward_of(&mdp, &Policy::deterministic(2, &actions)).unwrap();
        assert!((r - expected).abs() < 1e-12, "{actions:?}: {r}");
    }
    let v = optimal_values(&mdp);
    assert_eq!(v.greedy, vec![1, 0]);
    assert!((v.optimal_reward(&mdp) - 1.84).abs() < 1e-12);
}

#[test]
fn myopic_occupancy_and_values() {
    let base = two_state_mdp(0.0);
    let mdp = Mdp::new(
        2,
        2,
        vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        vec![1.0, 0.5, 2.0, 3.0],
        0.0,
        base.initial().clone(),
    )
    .unwrap();
    let pi = Policy::new(2, 2, vec![0.3, 0.7, 0.6, 0.4]).unwrap();
    let d = occupancy(&mdp, &pi).unwrap();
    assert!(linf(d.weights(), &[0.8 * 0.3, 0.8 * 0.7, 0.2 * 0.6, 0.2 * 0.4]) < 1e-15);
    let v = optimal_values(&mdp);
    assert!(linf(&v.values, &[1.0, 3.0]) < 1e-12);
}

#[test]
fn constant_reward_has_unit_value() {
    let mut r = rng(3);
    let mdp = random_mdp(&mut r, 3, 2, 0.7).with_rewards(vec![1.0; 6]).unwrap();
    let pi = random_policy(&mut r, 3, 2);
    assert!((reward_of(&mdp, &pi).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn conditioning_recovers_policies() {
    let mdp = two_state_mdp(0.0);
    let d = occupancy(&mdp, &Policy::uniform(2, 2)).unwrap();
    let pi = policy_from_occupancy(&d).unwrap();
    assert!(linf(pi.as_slice(), &[0.5; 4]) < 1e-14);
    let star = occupancy(&mdp, &Policy::deterministic(2, &[1, 0])).unwrap();
    assert_eq!(policy_from_occupancy(&star).unwrap().as_slice(), &[0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn single_state_program_is_the_simplex() {
    let mdp = Mdp::new(1, 3, vec![1.0; 3], vec![0.2, 0.9, 0.4], 0.5, Distribution::uniform(1)).unwrap();
    let lp = state_action_lp(&mdp).unwrap();
    assert_eq!(lp.rank(), 1);
    assert_eq!(lp.cost(), &[0.2, 0.9, 0.4]);
    let vs = enumerate_vertices(&lp).unwrap();
    assert_eq!(vs.len(), 3);
}

#[test]
fn bandit_rate_constants() {
    let mdp = Mdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.0], 0.9, Distribution::uniform(1)).unwrap();
    let rc = mdp_rate_constants(&mdp).unwrap();
    assert!((rc.delta_rate - 1.0).abs() < 1e-12);
    assert!((rc.delta_lower - 1.0).abs() < 1e-12);
    assert!((rc.delta_kakade - 1.0).abs() < 1e-12);
}

#[test]
fn example_rate_constants() {
    let rc = mdp_rate_constants(&two_state_mdp(0.0)).unwrap();
    assert!((rc.delta_rate - 0.8).abs() < 1e-9);
    assert!((rc.delta_lower - 0.64).abs() < 1e-9);
    assert!((rc.delta_kakade - 0.8).abs() < 1e-9);
    let rc = mdp_rate_constants(&two_state_mdp(3.0)).unwrap();
    assert!((rc.delta_rate - 0.5789).abs() < 1e-3);
    assert!((rc.delta_lower - 0.5326).abs() < 1e-3);
    assert!((rc.delta_kakade - 1.1).abs() < 1e-9);
}

#[test]
fn example_polytope_vertices_are_policies() {
    let mdp = two_state_mdp(0.0);
    let lp = state_action_lp(&mdp).unwrap();
    let vs = enumerate_vertices(&lp).unwrap();
    assert_eq!(vs.len(), 4);
    let rc = rate_constants(&lp, &vs, lp.max_entropy_point()).unwrap();
    assert!((rc.delta_rate - 0.8).abs() < 1e-9);
    assert!((rc.delta_lower - 0.64).abs() < 1e-9);
}

#[test]
fn all_optimal_is_trivial() {
    let mdp = two_state_mdp(0.0).with_rewards(vec![0.5; 4]).unwrap();
    assert!(matches!(mdp_rate_constants(&mdp), Err(Error::TrivialProgram)));
}

#[test]
fn exploration_cases() {
    assert!(check_exploration(&two_state_mdp(0.0)));
    // State 1 is absorbing, starts with no mass and nothing leads there.
    let isolated = Mdp::new(
        2,
        2,
        vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        vec![0.0; 4],
        0.9,
        Distribution::dirac(2, 0),
    )
    .unwrap();
    assert!(!check_exploration(&isolated));
    assert_eq!(unexplored_state(&isolated), Some(1));
    assert!(matches!(
        state_action_lp(&isolated),
        Err(Error::ExplorationViolation { state: 1 })
    ));
    // Reachable only under one action: some policy avoids it.
    let avoidable = Mdp::new(
        2,
        2,
        vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        vec![0.0; 4],
        0.9,
        Distribution::dirac(2, 0),
    )
    .unwrap();
    assert!(!check_exploration(&avoidable));
    // Reached under every action.
    let forced = Mdp::new(
        2,
        2,
        vec![0.5, 0.5, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        vec![0.0; 4],
        0.9,
        Distribution::dirac(2, 0),
    )
    .unwrap();
    assert!(check_exploration(&forced));
}

/// Exploration by brute force: every deterministic policy reaches every state.
fn explores_by_enumeration(mdp: &Mdp) -> bool {
    deterministic_policies(mdp).unwrap().iter().all(|actions| {
        let rho = state_occupancy(mdp, &Policy::deterministic(mdp.num_actions(), actions)).unwrap();
        rho.iter().all(|x| *x > 1e-12)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn occupancy_matches_truncated_series(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mdp = random_mdp(&mut r, 3, 2, 0.95);
        let pi = random_policy(&mut r, 3, 2);
        let rho = state_occupancy(&mdp, &pi).unwrap();
        prop_assert!(linf(&rho, &series_state_occupancy(&mdp, &pi, 2000)) < 1e-8);
        let d = occupancy(&mdp, &pi).unwrap();
        prop_assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(flow_residual(&mdp, d.weights()) < 1e-9);
        for (m, x) in d.state_marginal().iter().zip(mdp.initial().weights()) {
            prop_assert!(*m >= (1.0 - mdp.discount()) * x - 1e-15);
        }
    }

    #[test]
    fn conditioning_round_trips(seed in any::<u64>(), s_n in 1usize..5, a_n in 1usize..4) {
        let mut r = rng(seed);
        let mdp = random_mdp(&mut r, s_n, a_n, 0.9);
        let pi = random_policy(&mut r, s_n, a_n);
        let d = occupancy(&mdp, &pi).unwrap();
        let back = policy_from_occupancy(&d).unwrap();
        prop_assert!(linf(back.as_slice(), pi.as_slice()) < 1e-9);
        let d2 = occupancy(&mdp, &back).unwrap();
        prop_assert!(linf(d2.weights(), d.weights()) < 1e-9);
    }

    #[test]
    fn value_iteration_matches_policy_iteration(seed in any::<u64>(), s_n in 1usize..6, a_n in 2usize..4) {
        let mut r = rng(seed);
        let mdp = random_mdp(&mut r, s_n, a_n, 0.9);
        let v = optimal_values(&mdp);
        let (actions, values) = policy_iteration(&mdp);
        prop_assert_eq!(&v.greedy, &actions);
        prop_assert!(linf(&v.values, &values) < 1e-10);
        for (s, opt) in v.optimal_actions.iter().enumerate() {
            for a in 0..a_n {
                let adv = v.advantages[s * a_n + a];
                prop_assert!(adv <= 1e-12);
                if opt.contains(&a) {
                    prop_assert!(adv.abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn performance_difference_identity(seed in any::<u64>(), s_n in 1usize..5, a_n in 2usize..4) {
        let mut r = rng(seed);
        let mdp = random_mdp(&mut r, s_n, a_n, 0.85);
        let v = optimal_values(&mdp);
        let pi = random_policy(&mut r, s_n, a_n);
        let d = occupancy(&mdp, &pi).unwrap();
        let lhs = v.optimal_reward(&mdp) - reward_of(&mdp, &pi).unwrap();
        let rhs = -d.weights().iter().zip(&v.advantages).map(|(x, a)| x * a).sum::<f64>() / (1.0 - mdp.discount());
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn polytope_vertices_are_deterministic_occupancies(seed in any::<u64>(), s_n in 1usize..4, a_n in 2usize..4) {
        let mut r = rng(seed);
        let mdp = random_mdp(&mut r, s_n, a_n, 0.8);
        let lp = state_action_lp(&mdp).unwrap();
        let vs = enumerate_vertices(&lp).unwrap();
        let policies = deterministic_policies(&mdp).unwrap();
        prop_assert_eq!(vs.len(), policies.len());
        let index: Vec<usize> = policies
            .iter()
            .map(|p| {
                let d = occupancy(&mdp, &Policy::deterministic(a_n, p)).unwrap();
                vs.find(d.weights(), 1e-8).expect("occupancy is a vertex")
            })
            .collect();
        for (i, p) in policies.iter().enumerate() {
            for (j, q) in policies.iter().enumerate() {
                let differ = p.iter().zip(q).filter(|(a, b)| a != b).count();
                prop_assert_eq!(vs.adjacent(index[i], index[j]), differ == 1);
            }
        }
    }

    #[test]
    fn rate_constants_improve_on_lower_bound(seed in any::<u64>(), s_n in 2usize..4, a_n in 2usize..4) {
        let mut r = rng(seed);
        let mdp = random_mdp(&mut r, s_n, a_n, 0.9);
        let rc = mdp_rate_constants(&mdp).unwrap();
        prop_assume!(rc.unique_optimum);
        prop_assert!(rc.delta_lower < rc.delta_rate);
        prop_assert!(rc.delta_rate <= rc.delta_kakade * (1.0 + 1e-9));
    }

    #[test]
    fn structural_exploration_check_matches_enumeration(seed in any::<u64>(), s_n in 2usize..5, a_n in 1usize..3) {
        let mut r = rng(seed);
        // Sparse kernels and a point mass start, so exploration can fail.
        let mut transition = Vec::new();
        for _ in 0..s_n * a_n {
            let mut row = vec![0.0; s_n];
            let hits = r.gen_range(1..=2);
            for _ in 0..hits {
                row[r.gen_range(0..s_n)] += 1.0 / hits as f64;
            }
            transition.extend(row);
        }
        let mdp = Mdp::new(s_n, a_n, transition, vec![0.0; s_n * a_n], 0.9, Distribution::dirac(s_n, 0)).unwrap();
        prop_assert_eq!(check_exploration(&mdp), explores_by_enumeration(&mdp));
    }
}
