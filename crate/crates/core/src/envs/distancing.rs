use crate::model::{decode_joint, Environment, MdpTables, MultiAgentMdp};
use crate::{Error, Result};

pub const SAFE: usize = 0;
pub const SPREAD: usize = 1;

/// Two-state facility game: agents pick facilities, rewards grow with the
/// number of agents sharing a facility, and crowding flips the game into a
/// penalised spread state.
#[derive(Debug, Clone, PartialEq)]
pub struct DistancingParams {
    pub n_agents: usize,
    /// One strictly increasing positive weight per facility.
    pub weights: Vec<f64>,
    /// Reward reduction in the spread state.
    pub penalty: f64,
    /// Safe moves to spread when some facility holds more than this many agents.
    pub spread_trigger: usize,
    /// Spread moves to safe when every facility holds at most this many agents.
    pub return_trigger: usize,
    pub gamma: f64,
    /// Initial probability of the safe state.
    pub mu_safe: f64,
}

impl Default for DistancingParams {
    fn default() -> Self {
        Self {
            n_agents: 8,
            weights: vec![0.1, 0.2, 0.3, 0.4],
            penalty: 0.5,
            spread_trigger: 4,
            return_trigger: 2,
            gamma: 0.99,
            mu_safe: 0.5,
        }
    }
}

impl DistancingParams {
    /// 3 agents and 2 facilities; spread when all three crowd one facility.
    pub fn small() -> Self {
        Self {
            n_agents: 3,
            weights: vec![0.1, 0.2],
            spread_trigger: 2,
            return_trigger: 2,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n_agents == 0 {
            return bad("at least one agent is required".into());
        }
        if self.weights.is_empty() {
            return bad("at least one facility is required".into());
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("facility weights must be positive and finite".into());
        }
        if self.weights.windows(2).any(|w| w[0] >= w[1]) {
            return bad("facility weights must be strictly increasing".into());
        }
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return bad(format!("penalty must be positive, got {}", self.penalty));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.mu_safe) {
            return bad(format!("mu_safe must lie in [0, 1], got {}", self.mu_safe));
        }
        Ok(())
    }

    /// `(lo, hi)` of the raw reward `w_k * count_k - penalty * [spread]`.
    fn raw_range(&self) -> (f64, f64) {
        let w_min = self.weights[0];
        let w_max = *self.weights.last().unwrap();
        (w_min - self.penalty, w_max * self.n_agents as f64)
    }
}

/// Builds the distancing game. Rewards are mapped affinely from
/// `[w_min - penalty, w_max * n]` onto `[0, 1]`; the stage potential is the
/// weighted Rosenthal sum under the same map.
pub fn build_distancing(p: &DistancingParams) -> Result<Environment> {
    p.validate()?;
    let n = p.n_agents;
    let k = p.weights.len();
    let (lo, hi) = p.raw_range();
    let alpha = 1.0 / (hi - lo);
    let joint = k.pow(n as u32);
    let counts_vec = vec![k; n];

    let mut rewards = vec![vec![Vec::with_capacity(joint), Vec::with_capacity(joint)]; n];
    let mut transitions = vec![Vec::with_capacity(joint), Vec::with_capacity(joint)];
    let mut potential = Vec::with_capacity(2 * joint);
    let mut digits = vec![0usize; n];
    let mut load = vec![0usize; k];
    for state in [SAFE, SPREAD] {
        let pen = if state == SPREAD { p.penalty } else { 0.0 };
        for a in 0..joint {
            decode_joint(a, &counts_vec, &mut digits);
            load.iter_mut().for_each(|l| *l = 0);
            for &d in &digits {
                load[d] += 1;
            }
            for i in 0..n {
                let raw = p.weights[digits[i]] * load[digits[i]] as f64 - pen;
                let r = alpha * (raw - lo);
                if !(-1e-12..=1.0 + 1e-12).contains(&r) {
                    return Err(Error::InvalidParams(format!(
                        "rescaled reward {r} of agent {i} leaves [0, 1]"
                    )));
                }
                rewards[i][state].push(r.clamp(0.0, 1.0));
            }
            let rosenthal: f64 = (0..k)
                .map(|f| p.weights[f] * (load[f] * (load[f] + 1)) as f64 / 2.0)
                .sum();
            potential.push(alpha * (rosenthal - n as f64 * pen - n as f64 * lo));
            let next = if state == SAFE {
                if load.iter().any(|&l| l > p.spread_trigger) {
                    SPREAD
                } else {
                    SAFE
                }
            } else if load.iter().all(|&l| l <= p.return_trigger) {
                SAFE
            } else {
                SPREAD
            };
            transitions[state].push(vec![(next, 1.0)]);
        }
    }
    let mdp = MultiAgentMdp::new(MdpTables {
        n_agents: n,
        action_counts: vec![vec![k; n]; 2],
        rewards,
        transitions,
        gamma: p.gamma,
        mu: vec![p.mu_safe, 1.0 - p.mu_safe],
    })?;
    Environment::new(mdp, Some(potential), format!("distancing-{n}a-{k}f"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::mismatch_bound;

    #[test]
    fn default_shape() {
        let env = build_distancing(&DistancingParams::default()).unwrap();
        let mdp = env.mdp();
        assert_eq!(mdp.n_states(), 2);
        assert_eq!(mdp.n_agents(), 8);
        assert_eq!(mdp.a_max(), 4);
        assert_eq!(mdp.joint_range(0).len(), 4usize.pow(8));
    }

    #[test]
    fn single_agent_never_spreads() {
        let env = build_distancing(&DistancingParams {
            n_agents: 1,
            ..DistancingParams::default()
        })
        .unwrap();
        let mdp = env.mdp();
        for row in mdp.joint_range(SAFE) {
            assert_eq!(mdp.transition_row(row).0, &[SAFE]);
        }
        let mut only_safe = mdp.clone().to_tables();
        only_safe.mu = vec![1.0, 0.0];
        let m = mismatch_bound(&MultiAgentMdp::new(only_safe).unwrap(), 100);
        assert!(m.upper.is_some(), "spread is unreachable from safe");
    }

    #[test]
    fn triggers() {
        let env = build_distancing(&DistancingParams::small()).unwrap();
        let mdp = env.mdp();
        // joint index a0 + 2 a1 + 4 a2
        let next = |s: usize, a: usize| mdp.transition_row(mdp.joint_range(s).start + a).0[0];
        assert_eq!(next(SAFE, 0), SPREAD);
        assert_eq!(next(SAFE, 7), SPREAD);
        assert_eq!(next(SAFE, 1), SAFE);
        assert_eq!(next(SPREAD, 3), SAFE);
        assert_eq!(next(SPREAD, 0), SPREAD);
    }

    #[test]
    fn rewards_rescaled_into_unit_interval() {
        let p = DistancingParams::default();
        let env = build_distancing(&p).unwrap();
        let mdp = env.mdp();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..p.n_agents {
            for &r in mdp.rewards(i) {
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        assert!(lo >= 0.0 && hi <= 1.0);
        // all agents on D in the safe state is the best possible outcome
        assert!((hi - 1.0).abs() < 1e-12);
        // alone at A in the spread state is the worst
        assert!(lo.abs() < 1e-12);
    }

    #[test]
    fn bad_params() {
        for p in [
            DistancingParams {
                weights: vec![0.2, 0.1],
                ..DistancingParams::small()
            },
            DistancingParams {
                penalty: 0.0,
                ..DistancingParams::small()
            },
            DistancingParams {
                gamma: 1.0,
                ..DistancingParams::small()
            },
        ] {
            assert!(matches!(build_distancing(&p), Err(Error::InvalidParams(_))));
        }
    }
}
