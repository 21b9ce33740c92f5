use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::envs::{build_distancing, build_stage_congestion, pure_nash_profiles, CostDescriptor, DistancingParams};
use crate::exact::{value_functions, MismatchBound, BoundMethod};
use crate::model::{ActionLayout, MdpTables};
use crate::verify::{finite_diff_grad, fixed_point_residual, nash_gap};

fn report_with(adv: Vec<f64>, visitation: Vec<f64>) -> EvalReport {
    EvalReport {
        values: Vec::new(),
        q: Vec::new(),
        advantage: adv,
        visitation,
        potential: None,
        potential_mu: None,
        unvisited: None,
    }
}

fn one_state_two_actions() -> Arc<ActionLayout> {
    Arc::new(ActionLayout::new(1, &[vec![2]]))
}

/// One agent, one state, two actions paying `r0` and `r1`.
fn bandit(r0: f64, r1: f64, gamma: f64) -> MultiAgentMdp {
    MultiAgentMdp::new(MdpTables {
        n_agents: 1,
        action_counts: vec![vec![2]],
        rewards: vec![vec![vec![r0, r1]]],
        transitions: vec![vec![vec![(0, 1.0)], vec![(0, 1.0)]]],
        gamma,
        mu: vec![1.0],
    })
    .unwrap()
}

#[test]
fn inpg_fixed_points_and_hand_example() {
    let theta = Logits::new(one_state_two_actions(), vec![0.3, -0.2]).unwrap();
    let zero = report_with(vec![0.0, 0.0], vec![1.0]);
    assert_eq!(inpg_step(&theta, &zero, 0.1, 0.99).unwrap(), theta);
    let adv = report_with(vec![0.5, -0.5], vec![1.0]);
    assert_eq!(inpg_step(&theta, &adv, 0.0, 0.99).unwrap(), theta);
    let next = inpg_step(&Logits::zeros(one_state_two_actions()), &adv, 0.1, 0.99).unwrap();
    assert!((next.as_slice()[0] - 5.0).abs() < 1e-12);
    assert!((next.as_slice()[1] + 5.0).abs() < 1e-12);
}

#[test]
fn inpg_rejects_non_finite_advantage() {
    let theta = Logits::zeros(one_state_two_actions());
    let bad = report_with(vec![0.0, f64::NAN], vec![1.0]);
    assert!(matches!(
        inpg_step(&theta, &bad, 0.1, 0.9),
        Err(Error::NonFinite { action: 1, .. })
    ));
}

#[test]
fn mwu_normalisation_and_interior() {
    let pol = JointPolicy::new(one_state_two_actions(), vec![0.3, 0.7]).unwrap();
    let same = report_with(vec![0.4, 0.4], vec![1.0]);
    let out = mwu_step(&pol, &same, 0.5, 0.9).unwrap();
    for (a, b) in out.as_slice().iter().zip(pol.as_slice()) {
        assert!((a - b).abs() < 1e-15);
    }
    let zero = report_with(vec![0.0, 0.0], vec![1.0]);
    assert_eq!(mwu_step(&pol, &zero, 0.5, 0.9).unwrap().as_slice(), pol.as_slice());
    let edge = JointPolicy::new(one_state_two_actions(), vec![0.0, 1.0]).unwrap();
    assert!(matches!(mwu_step(&edge, &zero, 0.5, 0.9), Err(Error::NotInterior { action: 0, .. })));
}

proptest! {
    #[test]
    fn inpg_and_mwu_agree(
        theta in proptest::collection::vec(-5.0f64..5.0, 7),
        adv in proptest::collection::vec(-2.0f64..2.0, 7),
        eta in 0.0f64..0.5,
        gamma in 0.0f64..0.99,
    ) {
        let layout = Arc::new(ActionLayout::new(2, &[vec![3, 2], vec![1, 1]]));
        let theta = Logits::new(layout, theta).unwrap();
        let rep = report_with(adv, vec![0.5, 0.5]);
        let a = inpg_step(&theta, &rep, eta, gamma).unwrap().softmax();
        let b = mwu_step(&theta.softmax(), &rep, eta, gamma).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn ipg_stationary_and_zero_visitation() {
    let mdp = bandit(0.2, 0.9, 0.5);
    let theta = Logits::new(one_state_two_actions(), vec![0.1, 0.4]).unwrap();
    let zero = report_with(vec![0.0, 0.0], vec![1.0]);
    assert_eq!(ipg_step(&theta, &mdp, &zero, 0.3).unwrap(), theta);

    let two = MultiAgentMdp::new(MdpTables {
        n_agents: 1,
        action_counts: vec![vec![2], vec![2]],
        rewards: vec![vec![vec![0.0, 1.0], vec![0.5, 0.0]]],
        transitions: vec![vec![vec![(0, 1.0)], vec![(0, 1.0)]], vec![vec![(1, 1.0)], vec![(1, 1.0)]]],
        gamma: 0.9,
        mu: vec![1.0, 0.0],
    })
    .unwrap();
    let theta = Logits::zeros(two.layout().clone());
    let rep = report_with(vec![0.3, -0.3, 0.7, -0.7], vec![1.0, 0.0]);
    let next = ipg_step(&theta, &two, &rep, 0.1).unwrap();
    assert_eq!(&next.as_slice()[2..], &[0.0, 0.0]);
    assert!(next.as_slice()[0] > 0.0);
}

#[test]
fn ipg_matches_hand_form_without_discount() {
    let mdp = bandit(0.2, 0.9, 0.0);
    let theta = Logits::new(one_state_two_actions(), vec![0.1, 0.4]).unwrap();
    let pi = theta.softmax();
    let env = Environment::plain(mdp.clone(), "bandit");
    let rep = evaluate(&env, &pi).unwrap();
    let v = pi.as_slice()[0] * 0.2 + pi.as_slice()[1] * 0.9;
    let eta = 0.05;
    let next = ipg_step(&theta, &mdp, &rep, eta).unwrap();
    let hand = [eta * pi.as_slice()[0] * (0.2 - v), eta * pi.as_slice()[1] * (0.9 - v)];
    let fd = finite_diff_grad(
        |t| Ok(value_functions(&mdp, &t.softmax())?[0][0]),
        &theta,
        1e-5,
    )
    .unwrap();
    for k in 0..2 {
        let step = next.as_slice()[k] - theta.as_slice()[k];
        assert!((step - hand[k]).abs() < 1e-15);
        assert!((step - eta * fd[k]).abs() < 1e-6 * eta);
    }
}

#[test]
fn softmax_gradient_matches_finite_differences_with_discount() {
    let mdp = crate::envs::random_mdp(&mut ChaCha8Rng::seed_from_u64(8), 3, 2, 2, 2, 0.9);
    let theta = Logits::random_normal(mdp.layout().clone(), 1.0, &mut ChaCha8Rng::seed_from_u64(9));
    let pi = theta.softmax();
    let rep = evaluate(&Environment::plain(mdp.clone(), "r"), &pi).unwrap();
    let grad = softmax_gradient(&mdp, &pi, &rep);
    for i in 0..2 {
        let fd = finite_diff_grad(
            |t| {
                let v = value_functions(&mdp, &t.softmax())?;
                Ok(v[i].iter().zip(mdp.mu()).map(|(a, b)| a * b).sum())
            },
            &theta,
            1e-5,
        )
        .unwrap();
        for k in mdp.layout().agent_range(i) {
            assert!((fd[k] - grad[k]).abs() < 1e-6, "agent {i} coord {k}: {} vs {}", fd[k], grad[k]);
        }
    }
}

#[test]
fn step_size_formula() {
    assert!((step_size_bound(1, 1, 0.0, 1.0) - 1.0 / 27.0).abs() < 1e-15);
    assert!((step_size_bound(2, 1, 0.0, 1.0) * 4.0 - 1.0 / 27.0).abs() < 1e-15);
    let env = build_distancing(&DistancingParams::default()).unwrap();
    let m = mismatch_bound(env.mdp(), 0);
    let eta = max_step_size(env.mdp(), &m).unwrap();
    let expect = 0.01f64.powi(3) / (27.0 * 64.0 * 16.0 * (1.0 / (0.01 * 0.5)));
    assert!((eta - expect).abs() <= 1e-12 * expect);
    let none = MismatchBound {
        upper: None,
        enumerated_lower: None,
        method: BoundMethod::Enumeration,
        note: Some("x".into()),
    };
    assert!(matches!(max_step_size(env.mdp(), &none), Err(Error::MismatchUnavailable(_))));
}

#[test]
fn single_action_run_converges_immediately() {
    let mdp = MultiAgentMdp::new(MdpTables {
        n_agents: 2,
        action_counts: vec![vec![1, 1]],
        rewards: vec![vec![vec![0.5]]; 2],
        transitions: vec![vec![vec![(0, 1.0)]]],
        gamma: 0.9,
        mu: vec![1.0],
    })
    .unwrap();
    let env = Environment::plain(mdp.clone(), "trivial");
    for alg in [Algorithm::Inpg, Algorithm::Mwu, Algorithm::Ipg] {
        let cfg = AlgoConfig {
            guard: Some(Guard::Off),
            ..AlgoConfig::new(alg, 0.1, EvalMode::Exact)
        };
        let trace = run(&env, &cfg, Initial::Logits(Logits::zeros(mdp.layout().clone()))).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.status, RunStatus::Converged);
        assert_eq!(trace.records[0].max_policy_step_l1, 0.0);
    }
}

#[test]
fn guard_rejects_large_steps() {
    let env = build_stage_congestion(2, &vec![CostDescriptor::InverseLoad { base: 1.0 }; 2], 0.0).unwrap();
    let cfg = AlgoConfig::new(Algorithm::Inpg, 0.01, EvalMode::Exact);
    let init = Initial::Logits(Logits::random_normal(env.mdp().layout().clone(), 1.0, &mut ChaCha8Rng::seed_from_u64(3)));
    assert!(matches!(run(&env, &cfg, init.clone()), Err(Error::StepSizeGuard { .. })));
    let warn = AlgoConfig {
        guard: Some(Guard::Warn),
        max_iters: 2,
        ..cfg.clone()
    };
    assert_eq!(run(&env, &warn, init).unwrap().records.len(), 2);
}

#[test]
fn mwu_rejects_boundary_start() {
    let env = build_stage_congestion(2, &vec![CostDescriptor::InverseLoad { base: 1.0 }; 2], 0.0).unwrap();
    let layout = env.mdp().layout().clone();
    let pol = JointPolicy::deterministic(layout, |_, _| 0);
    let cfg = AlgoConfig {
        guard: Some(Guard::Off),
        ..AlgoConfig::new(Algorithm::Mwu, 0.001, EvalMode::Exact)
    };
    assert!(matches!(run(&env, &cfg, Initial::Policy(pol)), Err(Error::NotInterior { .. })));
}

#[test]
fn inpg_reaches_a_pure_equilibrium_of_the_stage_game() {
    let env = build_stage_congestion(2, &vec![CostDescriptor::InverseLoad { base: 1.0 }; 2], 0.0).unwrap();
    let mdp = env.mdp();
    let eta = 0.9 * max_step_size(mdp, &mismatch_bound(mdp, 0)).unwrap();
    let cfg = AlgoConfig {
        max_iters: 200_000,
        ..AlgoConfig::new(Algorithm::Inpg, eta, EvalMode::Exact)
    };
    let init = Logits::new(mdp.layout().clone(), vec![0.4, -0.1, -0.3, 0.2]).unwrap();
    let trace = run(&env, &cfg, Initial::Logits(init)).unwrap();
    assert!(trace.converged());
    let gap = nash_gap(mdp, &trace.final_policy).unwrap();
    assert!(gap.max_gap <= 1e-6, "gap {}", gap.max_gap);
    assert!(fixed_point_residual(mdp, &trace.final_policy).unwrap() <= 1e-6);
    let pure = pure_nash_profiles(&env, 0);
    let chosen: usize = (0..2).map(|i| (trace.final_policy.prob(i, 0, 1) > 0.5) as usize * (1 << i)).sum();
    assert!(pure.contains(&chosen));
    let phis: Vec<f64> = trace.records.iter().map(|r| r.potential.unwrap()).collect();
    assert!(phis.windows(2).all(|w| w[1] >= w[0] - 1e-12));
}

#[test]
fn snapshots_and_observer() {
    let env = build_stage_congestion(2, &vec![CostDescriptor::InverseLoad { base: 1.0 }; 2], 0.0).unwrap();
    let cfg = AlgoConfig {
        guard: Some(Guard::Off),
        max_iters: 10,
        snapshot_every: 4,
        nash_gap_every: 5,
        ..AlgoConfig::new(Algorithm::Ipg, 0.01, EvalMode::Exact)
    };
    let init = Logits::new(env.mdp().layout().clone(), vec![0.4, -0.1, -0.3, 0.2]).unwrap();
    let mut seen = 0;
    let trace = run_with_observer(&env, &cfg, Initial::Logits(init), |r, _| {
        assert_eq!(r.iteration, seen);
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, 10);
    let kept: Vec<usize> = trace.records.iter().filter(|r| r.policy.is_some()).map(|r| r.iteration).collect();
    assert_eq!(kept, vec![0, 4, 8, 9]);
    let gaps: Vec<usize> = trace.records.iter().filter(|r| r.nash_gap.is_some()).map(|r| r.iteration).collect();
    assert_eq!(gaps, vec![0, 5]);
    assert_eq!(trace.records.last().unwrap().policy.as_ref(), Some(&trace.final_policy));
}

#[test]
fn sampled_runs_are_deterministic() {
    let env = build_distancing(&DistancingParams::small()).unwrap();
    let cfg = AlgoConfig {
        max_iters: 5,
        ..AlgoConfig::new(Algorithm::Inpg, 1e-2, EvalMode::Sampled(crate::sampled::SampleConfig::new(10, 4, 3)))
    };
    let init = || Initial::Logits(Logits::zeros(env.mdp().layout().clone()));
    let a = run(&env, &cfg, init()).unwrap();
    let b = run(&env, &cfg, init()).unwrap();
    assert_eq!(a.final_policy, b.final_policy);
    assert!(a.records.iter().all(|r| r.potential.is_none()));
}
