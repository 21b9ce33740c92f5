use rand::Rng;

use crate::model::{MdpTables, MultiAgentMdp};

/// Random dense-ish MDP for tests and benchmarks.
///
/// Every agent has between 1 and `max_actions` actions per state, rewards
/// are uniform in `[0, 1]`, each transition row spreads over up to
/// `branching` successors and `mu` is a random distribution with full
/// support.
pub fn random_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_agents: usize,
    max_actions: usize,
    branching: usize,
    gamma: f64,
) -> MultiAgentMdp {
    let action_counts: Vec<Vec<usize>> = (0..n_states)
        .map(|_| (0..n_agents).map(|_| rng.random_range(1..=max_actions)).collect())
        .collect();
    let joint: Vec<usize> = action_counts.iter().map(|c| c.iter().product()).collect();
    let rewards = (0..n_agents)
        .map(|_| joint.iter().map(|&k| (0..k).map(|_| rng.random::<f64>()).collect()).collect())
        .collect();
    let transitions = joint
        .iter()
        .map(|&k| {
            (0..k)
                .map(|_| {
                    let m = rng.random_range(1..=branching.min(n_states));
                    let mut targets: Vec<usize> = Vec::with_capacity(m);
                    while targets.len() < m {
                        let t = rng.random_range(0..n_states);
                        if !targets.contains(&t) {
                            targets.push(t);
                        }
                    }
                    targets.sort_unstable();
                    simplex(rng, m).into_iter().zip(targets).map(|(p, t)| (t, p)).collect()
                })
                .collect()
        })
        .collect();
    let mu = simplex(rng, n_states);
    MultiAgentMdp::new(MdpTables {
        n_agents,
        action_counts,
        rewards,
        transitions,
        gamma,
        mu,
    })
    .expect("random MDP is valid by construction")
}

fn simplex<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
    let z: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / z).collect();
    // Put the rounding error on the last entry so the row sums to 1 closely.
    let head: f64 = p[..m - 1].iter().sum();
    p[m - 1] = 1.0 - head;
    p
}
