use super::dag::CostDescriptor;
use crate::model::{decode_joint, Environment, MdpTables, MultiAgentMdp};
use crate::{Error, Result};

/// One-state congestion game repeated forever: every agent picks one of the
/// facilities and earns `cost[f](load)`.
pub fn build_stage_congestion(n_agents: usize, facilities: &[CostDescriptor], gamma: f64) -> Result<Environment> {
    if n_agents == 0 || facilities.is_empty() {
        return Err(Error::InvalidParams("need at least one agent and one facility".into()));
    }
    for (f, c) in facilities.iter().enumerate() {
        c.check_range(f, n_agents)?;
    }
    let k = facilities.len();
    let joint = k.pow(n_agents as u32);
    let counts = vec![k; n_agents];
    let mut digits = vec![0; n_agents];
    let mut load = vec![0usize; k];
    let mut rewards = vec![vec![Vec::with_capacity(joint)]; n_agents];
    let mut potential = Vec::with_capacity(joint);
    for a in 0..joint {
        decode_joint(a, &counts, &mut digits);
        load.iter_mut().for_each(|l| *l = 0);
        for &d in &digits {
            load[d] += 1;
        }
        for (i, r) in rewards.iter_mut().enumerate() {
            r[0].push(facilities[digits[i]].eval(load[digits[i]]));
        }
        potential.push(facilities.iter().zip(&load).map(|(c, &l)| c.rosenthal(l)).sum());
    }
    let mdp = MultiAgentMdp::new(MdpTables {
        n_agents,
        action_counts: vec![vec![k; n_agents]],
        rewards,
        transitions: vec![vec![vec![(0, 1.0)]; joint]],
        gamma,
        mu: vec![1.0],
    })?;
    Environment::new(mdp, Some(potential), format!("stage-congestion-{n_agents}a-{k}f"))
}

/// Pure profiles (as joint indices) where no agent gains by switching action.
pub fn pure_nash_profiles(env: &Environment, state: usize) -> Vec<usize> {
    let mdp = env.mdp();
    let counts = mdp.layout().counts_at(state).to_vec();
    let n = mdp.n_agents();
    let mut digits = vec![0; n];
    let mut dev = vec![0; n];
    (0..mdp.joint_range(state).len())
        .filter(|&a| {
            decode_joint(a, &counts, &mut digits);
            (0..n).all(|i| {
                let base = mdp.reward(i, state, a);
                (0..counts[i]).all(|b| {
                    dev.copy_from_slice(&digits);
                    dev[i] = b;
                    mdp.reward(i, state, crate::model::encode_joint(&dev, &counts)) <= base + 1e-15
                })
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::potential_value;
    use crate::model::JointPolicy;

    fn two_by_two() -> Environment {
        let c = CostDescriptor::InverseLoad { base: 1.0 };
        build_stage_congestion(2, &[c.clone(), c], 0.0).unwrap()
    }

    #[test]
    fn split_profiles_are_the_pure_equilibria() {
        assert_eq!(pure_nash_profiles(&two_by_two(), 0), vec![1, 2]);
    }

    #[test]
    fn potential_matches_rosenthal_enumeration() {
        let env = two_by_two();
        // loads: (2,0) -> 1 + 1/2, split -> 1 + 1
        let expect = [1.5, 2.0, 2.0, 1.5];
        for (a, &e) in expect.iter().enumerate() {
            let pol = JointPolicy::deterministic(env.mdp().layout().clone(), |i, _| (a >> i) & 1);
            let (_, phi) = potential_value(&env, &pol).unwrap();
            assert!((phi - e).abs() < 1e-15, "profile {a}");
        }
    }
}
