//! Monte Carlo evaluation from episodic mini-batches.
//!
//! Returns are discounted and truncated at the horizon. Episode `e` of
//! iteration `k` draws agent `i`'s actions from stream `e (n + 1) + i` and
//! the initial state and transitions from stream `e (n + 1) + n`, all keyed
//! by `(seed, k)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{EvalReport, JointPolicy, MultiAgentMdp};
use crate::rng::stream_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// One return per episode from the first visit of a state or pair.
    #[default]
    FirstVisit,
    /// Every visit contributes a return.
    EveryVisit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub horizon: usize,
    pub batch: usize,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Estimator,
    /// Also estimate `Q_i` over joint actions (otherwise `q` is left empty).
    #[serde(default)]
    pub joint_q: bool,
}

impl SampleConfig {
    pub fn new(horizon: usize, batch: usize, seed: u64) -> Self {
        Self {
            horizon,
            batch,
            seed,
            estimator: Estimator::FirstVisit,
            joint_q: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.batch == 0 {
            return Err(Error::InvalidParams("horizon and batch must be at least 1".into()));
        }
        Ok(())
    }
}

/// One truncated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<usize>,
    /// Joint action index within each state's joint range.
    pub joint: Vec<usize>,
    /// Agent actions, `actions[t * n + i]`.
    pub actions: Vec<usize>,
    /// Rewards, `rewards[t * n + i]`.
    pub rewards: Vec<f64>,
}

fn draw<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left `u` above the cumulative sum: take the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn draw_pairs<R: Rng + ?Sized>(rng: &mut R, targets: &[usize], probs: &[f64]) -> usize {
    targets[draw(rng, probs)]
}

/// Rollout of `horizon` steps using one generator for everything.
pub fn sample_episode<R: Rng + ?Sized>(
    mdp: &MultiAgentMdp,
    policy: &JointPolicy,
    horizon: usize,
    rng: &mut R,
) -> Episode {
    let n = mdp.n_agents();
    let mut ep = Episode {
        states: Vec::with_capacity(horizon),
        joint: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon * n),
        rewards: Vec::with_capacity(horizon * n),
    };
    let mut s = draw(rng, mdp.mu());
    for _ in 0..horizon {
        let counts = mdp.layout().counts_at(s);
        let mut joint = 0;
        let mut stride = 1;
        for (i, &k) in counts.iter().enumerate() {
            let a = draw(rng, policy.dist(i, s));
            ep.actions.push(a);
            joint += a * stride;
            stride *= k;
        }
        push_step(mdp, &mut ep, s, joint);
        let (succ, prob) = mdp.transition_row(mdp.joint_range(s).start + joint);
        s = draw_pairs(rng, succ, prob);
    }
    ep
}

/// Rollout with one generator per agent and one for the environment.
fn sample_episode_streams<R: Rng>(
    mdp: &MultiAgentMdp,
    policy: &JointPolicy,
    horizon: usize,
    agents: &mut [R],
    env: &mut R,
) -> Episode {
    let n = mdp.n_agents();
    let mut ep = Episode {
        states: Vec::with_capacity(horizon),
        joint: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon * n),
        rewards: Vec::with_capacity(horizon * n),
    };
    let mut s = draw(env, mdp.mu());
    for _ in 0..horizon {
        let counts = mdp.layout().counts_at(s);
        let mut joint = 0;
        let mut stride = 1;
        for (i, rng) in agents.iter_mut().enumerate() {
            let a = draw(rng, policy.dist(i, s));
            ep.actions.push(a);
            joint += a * stride;
            stride *= counts[i];
        }
        push_step(mdp, &mut ep, s, joint);
        let (succ, prob) = mdp.transition_row(mdp.joint_range(s).start + joint);
        s = draw_pairs(env, succ, prob);
    }
    ep
}

fn push_step(mdp: &MultiAgentMdp, ep: &mut Episode, s: usize, joint: usize) {
    ep.states.push(s);
    ep.joint.push(joint);
    let row = mdp.joint_range(s).start + joint;
    for i in 0..mdp.n_agents() {
        ep.rewards.push(mdp.rewards(i)[row]);
    }
}

/// The batch used for iteration `iteration`.
pub fn sample_batch(mdp: &MultiAgentMdp, policy: &JointPolicy, cfg: &SampleConfig, iteration: u64) -> Vec<Episode> {
    let n = mdp.n_agents() as u64;
    (0..cfg.batch as u64)
        .map(|e| {
            let base = e * (n + 1);
            let mut agents: Vec<_> = (0..n).map(|i| stream_rng(cfg.seed, iteration, base + i)).collect();
            let mut env = stream_rng(cfg.seed, iteration, base + n);
            sample_episode_streams(mdp, policy, cfg.horizon, &mut agents, &mut env)
        })
        .collect()
}

/// Estimates for iteration 0 of `cfg.seed`.
pub fn estimate_eval(mdp: &MultiAgentMdp, policy: &JointPolicy, cfg: &SampleConfig) -> Result<EvalReport> {
    estimate_eval_at(mdp, policy, cfg, 0)
}

pub fn estimate_eval_at(
    mdp: &MultiAgentMdp,
    policy: &JointPolicy,
    cfg: &SampleConfig,
    iteration: u64,
) -> Result<EvalReport> {
    cfg.validate()?;
    if **mdp.layout() != **policy.layout() {
        return Err(Error::ShapeMismatch("policy layout does not match the MDP's action sets".into()));
    }
    let episodes = sample_batch(mdp, policy, cfg, iteration);
    Ok(estimate_from_episodes(mdp, &episodes, cfg))
}

/// Aggregates a batch into an [`EvalReport`]; `potential` is left empty.
pub fn estimate_from_episodes(mdp: &MultiAgentMdp, episodes: &[Episode], cfg: &SampleConfig) -> EvalReport {
    let n = mdp.n_agents();
    let ns = mdp.n_states();
    let layout = mdp.layout();
    let g = mdp.gamma();
    let every = cfg.estimator == Estimator::EveryVisit;

    let mut v_sum = vec![vec![0.0; ns]; n];
    let mut v_cnt = vec![0usize; ns];
    let mut q_sum = vec![0.0; layout.len()];
    let mut q_cnt = vec![0usize; layout.len()];
    let mut jq_sum = if cfg.joint_q { vec![vec![0.0; mdp.n_rows()]; n] } else { Vec::new() };
    let mut jq_cnt = if cfg.joint_q { vec![0usize; mdp.n_rows()] } else { Vec::new() };
    let mut occ = vec![0.0; ns];
    let mut occ_total = 0.0;

    let mut state_seen = vec![false; ns];
    let mut pair_seen = vec![false; layout.len()];
    let mut row_seen = if cfg.joint_q { vec![false; mdp.n_rows()] } else { Vec::new() };
    let mut ret = Vec::new();

    for ep in episodes {
        let len = ep.states.len();
        // returns-to-go, ret[t * n + i]
        ret.clear();
        ret.resize(len * n, 0.0);
        for t in (0..len).rev() {
            for i in 0..n {
                let tail = if t + 1 < len { ret[(t + 1) * n + i] } else { 0.0 };
                ret[t * n + i] = ep.rewards[t * n + i] + g * tail;
            }
        }
        state_seen.iter_mut().for_each(|x| *x = false);
        pair_seen.iter_mut().for_each(|x| *x = false);
        row_seen.iter_mut().for_each(|x| *x = false);
        let mut disc = 1.0;
        for t in 0..len {
            let s = ep.states[t];
            occ[s] += disc;
            occ_total += disc;
            disc *= g;
            if every || !state_seen[s] {
                state_seen[s] = true;
                v_cnt[s] += 1;
                for i in 0..n {
                    v_sum[i][s] += ret[t * n + i];
                }
            }
            for i in 0..n {
                let k = layout.index(i, s, ep.actions[t * n + i]);
                if every || !pair_seen[k] {
                    pair_seen[k] = true;
                    q_cnt[k] += 1;
                    q_sum[k] += ret[t * n + i];
                }
            }
            if cfg.joint_q {
                let row = mdp.joint_range(s).start + ep.joint[t];
                if every || !row_seen[row] {
                    row_seen[row] = true;
                    jq_cnt[row] += 1;
                    for i in 0..n {
                        jq_sum[i][row] += ret[t * n + i];
                    }
                }
            }
        }
    }

    let values: Vec<Vec<f64>> = v_sum
        .into_iter()
        .map(|row| {
            row.into_iter()
                .zip(&v_cnt)
                .map(|(x, &c)| if c > 0 { x / c as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let mut advantage = vec![0.0; layout.len()];
    let mut unvisited = vec![false; layout.len()];
    for k in 0..layout.len() {
        if q_cnt[k] == 0 {
            unvisited[k] = true;
        } else {
            let (i, s, _) = layout.locate(k);
            advantage[k] = q_sum[k] / q_cnt[k] as f64 - values[i][s];
        }
    }
    let q: Vec<Vec<f64>> = jq_sum
        .into_iter()
        .map(|row| {
            row.into_iter()
                .zip(&jq_cnt)
                .map(|(x, &c)| if c > 0 { x / c as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let visitation = if occ_total > 0.0 {
        occ.iter().map(|x| x / occ_total).collect()
    } else {
        occ
    };
    EvalReport {
        values,
        q,
        advantage,
        visitation,
        potential: None,
        potential_mu: None,
        unvisited: Some(unvisited),
    }
}
