use std::fmt;
use std::sync::Arc;

use super::layout::ActionLayout;
use crate::{Error, Result};

/// Tolerance on transition rows, the initial distribution and policy simplices.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Unchecked tabular description of a multi-agent MDP.
///
/// This is the exchange form used by builders and the file format; turn it
/// into a [`MultiAgentMdp`] with [`MultiAgentMdp::new`], which validates it.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpTables {
    pub n_agents: usize,
    /// `action_counts[state][agent]`
    pub action_counts: Vec<Vec<usize>>,
    /// `rewards[agent][state][joint]`
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `transitions[state][joint]` is a sparse list of `(next, probability)`.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub gamma: f64,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    EmptyActionSet { state: usize, agent: usize },
    TransitionRowSum { state: usize, joint: usize, sum: f64 },
    NegativeTransition { state: usize, joint: usize, next: usize, prob: f64 },
    TransitionTarget { state: usize, joint: usize, next: usize },
    RewardOutOfRange { agent: usize, state: usize, joint: usize, value: f64 },
    MuSum { sum: f64 },
    NegativeMu { state: usize, value: f64 },
    Gamma { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
            Violation::EmptyActionSet { state, agent } => {
                write!(f, "agent {agent} has no actions in state {state}")
            }
            Violation::TransitionRowSum { state, joint, sum } => write!(
                f,
                "transition row (state {state}, joint action {joint}) sums to {sum} (off by {:e})",
                (sum - 1.0).abs()
            ),
            Violation::NegativeTransition { state, joint, next, prob } => write!(
                f,
                "transition (state {state}, joint action {joint}) -> {next} has negative probability {prob}"
            ),
            Violation::TransitionTarget { state, joint, next } => write!(
                f,
                "transition (state {state}, joint action {joint}) targets unknown state {next}"
            ),
            Violation::RewardOutOfRange { agent, state, joint, value } => write!(
                f,
                "reward of agent {agent} at (state {state}, joint action {joint}) is {value}, outside [0, 1]"
            ),
            Violation::MuSum { sum } => {
                write!(f, "initial distribution sums to {sum} (off by {:e})", (sum - 1.0).abs())
            }
            Violation::NegativeMu { state, value } => {
                write!(f, "initial distribution has negative mass {value} at state {state}")
            }
            Violation::Gamma { value } => write!(f, "discount {value} outside [0, 1)"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a multi-agent MDP and lists the
/// offending entries. An empty report means the tables are well formed.
pub fn validate_mdp(t: &MdpTables) -> ValidationReport {
    let mut out = Vec::new();
    let n_states = t.action_counts.len();
    if t.n_agents == 0 {
        out.push(Violation::Shape("no agents".into()));
    }
    if n_states == 0 {
        out.push(Violation::Shape("no states".into()));
    }
    if !(0.0..1.0).contains(&t.gamma) {
        out.push(Violation::Gamma { value: t.gamma });
    }
    let mut joint_counts = Vec::with_capacity(n_states);
    for (s, row) in t.action_counts.iter().enumerate() {
        if row.len() != t.n_agents {
            out.push(Violation::Shape(format!(
                "state {s} lists {} action counts for {} agents",
                row.len(),
                t.n_agents
            )));
            joint_counts.push(0);
            continue;
        }
        for (i, &k) in row.iter().enumerate() {
            if k == 0 {
                out.push(Violation::EmptyActionSet { state: s, agent: i });
            }
        }
        joint_counts.push(row.iter().product::<usize>());
    }
    if t.rewards.len() != t.n_agents {
        out.push(Violation::Shape(format!(
            "rewards given for {} agents, expected {}",
            t.rewards.len(),
            t.n_agents
        )));
    }
    for (i, per_agent) in t.rewards.iter().enumerate() {
        if per_agent.len() != n_states {
            out.push(Violation::Shape(format!(
                "rewards of agent {i} cover {} states, expected {n_states}",
                per_agent.len()
            )));
            continue;
        }
        for (s, row) in per_agent.iter().enumerate() {
            if row.len() != joint_counts[s] {
                out.push(Violation::Shape(format!(
                    "rewards of agent {i} at state {s} have {} entries, expected {}",
                    row.len(),
                    joint_counts[s]
                )));
                continue;
            }
            for (a, &r) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&r) {
                    out.push(Violation::RewardOutOfRange { agent: i, state: s, joint: a, value: r });
                }
            }
        }
    }
    if t.transitions.len() != n_states {
        out.push(Violation::Shape(format!(
            "transitions cover {} states, expected {n_states}",
            t.transitions.len()
        )));
    } else {
        for (s, rows) in t.transitions.iter().enumerate() {
            if rows.len() != joint_counts[s] {
                out.push(Violation::Shape(format!(
                    "transitions at state {s} have {} rows, expected {}",
                    rows.len(),
                    joint_counts[s]
                )));
                continue;
            }
            for (a, row) in rows.iter().enumerate() {
                let mut sum = 0.0;
                for &(next, p) in row {
                    if next >= n_states {
                        out.push(Violation::TransitionTarget { state: s, joint: a, next });
                    }
                    if p < 0.0 || !p.is_finite() {
                        out.push(Violation::NegativeTransition { state: s, joint: a, next, prob: p });
                    }
                    sum += p;
                }
                if !((sum - 1.0).abs() <= SIMPLEX_TOL) {
                    out.push(Violation::TransitionRowSum { state: s, joint: a, sum });
                }
            }
        }
    }
    if t.mu.len() != n_states {
        out.push(Violation::Shape(format!(
            "initial distribution has {} entries, expected {n_states}",
            t.mu.len()
        )));
    } else {
        for (s, &m) in t.mu.iter().enumerate() {
            if m < 0.0 || !m.is_finite() {
                out.push(Violation::NegativeMu { state: s, value: m });
            }
        }
        let sum: f64 = t.mu.iter().sum();
        if !((sum - 1.0).abs() <= SIMPLEX_TOL) {
            out.push(Violation::MuSum { sum });
        }
    }
    ValidationReport { violations: out }
}

/// A validated finite multi-agent MDP `(S, N, {A_i, r_i}, P, gamma, mu)`.
///
/// Action sets may differ across states. Joint actions at a state are
/// indexed in mixed radix with agent 0 as the least significant digit, and
/// every per-joint-action table is laid out state-major with
/// [`MultiAgentMdp::joint_range`] giving the slice for one state.
#[derive(Debug, Clone)]
pub struct MultiAgentMdp {
    layout: Arc<ActionLayout>,
    joint_offsets: Vec<usize>,
    rewards: Vec<Vec<f64>>,
    trans_offsets: Vec<usize>,
    trans_next: Vec<usize>,
    trans_prob: Vec<f64>,
    gamma: f64,
    mu: Vec<f64>,
}

impl MultiAgentMdp {
    pub fn new(tables: MdpTables) -> Result<Self> {
        let report = validate_mdp(&tables);
        if !report.is_ok() {
            return Err(Error::InvalidMdp(report));
        }
        let MdpTables {
            n_agents,
            action_counts,
            rewards,
            transitions,
            gamma,
            mu,
        } = tables;
        let layout = Arc::new(ActionLayout::new(n_agents, &action_counts));
        let mut joint_offsets = Vec::with_capacity(action_counts.len() + 1);
        let mut acc = 0;
        for s in 0..action_counts.len() {
            joint_offsets.push(acc);
            acc += layout.joint_count(s);
        }
        joint_offsets.push(acc);

        let rewards = rewards.into_iter().map(|per| per.concat()).collect();
        let mut trans_offsets = Vec::with_capacity(acc + 1);
        let mut trans_next = Vec::new();
        let mut trans_prob = Vec::new();
        for row in transitions.into_iter().flatten() {
            trans_offsets.push(trans_next.len());
            for (next, p) in row {
                trans_next.push(next);
                trans_prob.push(p);
            }
        }
        trans_offsets.push(trans_next.len());
        Ok(Self {
            layout,
            joint_offsets,
            rewards,
            trans_offsets,
            trans_next,
            trans_prob,
            gamma,
            mu,
        })
    }

    pub fn to_tables(&self) -> MdpTables {
        let n = self.n_states();
        let action_counts = (0..n).map(|s| self.layout.counts_at(s).to_vec()).collect();
        let rewards = self
            .rewards
            .iter()
            .map(|r| (0..n).map(|s| r[self.joint_range(s)].to_vec()).collect())
            .collect();
        let transitions = (0..n)
            .map(|s| {
                self.joint_range(s)
                    .map(|row| {
                        let (next, prob) = self.transition_row(row);
                        next.iter().copied().zip(prob.iter().copied()).collect()
                    })
                    .collect()
            })
            .collect();
        MdpTables {
            n_agents: self.n_agents(),
            action_counts,
            rewards,
            transitions,
            gamma: self.gamma,
            mu: self.mu.clone(),
        }
    }

    pub fn layout(&self) -> &Arc<ActionLayout> {
        &self.layout
    }

    pub fn n_agents(&self) -> usize {
        self.layout.n_agents()
    }

    pub fn n_states(&self) -> usize {
        self.layout.n_states()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Largest action set over agents (and states).
    pub fn a_max(&self) -> usize {
        self.layout.a_max()
    }

    /// Flat row indices of the joint actions available at `state`.
    #[inline]
    pub fn joint_range(&self, state: usize) -> std::ops::Range<usize> {
        self.joint_offsets[state]..self.joint_offsets[state + 1]
    }

    /// Total number of `(state, joint action)` rows.
    pub fn n_rows(&self) -> usize {
        *self.joint_offsets.last().unwrap()
    }

    /// Rewards of `agent` over all `(state, joint action)` rows.
    #[inline]
    pub fn rewards(&self, agent: usize) -> &[f64] {
        &self.rewards[agent]
    }

    #[inline]
    pub fn reward(&self, agent: usize, state: usize, joint: usize) -> f64 {
        self.rewards[agent][self.joint_offsets[state] + joint]
    }

    /// Successors and probabilities of the flat `(state, joint action)` row.
    #[inline]
    pub fn transition_row(&self, row: usize) -> (&[usize], &[f64]) {
        let r = self.trans_offsets[row]..self.trans_offsets[row + 1];
        (&self.trans_next[r.clone()], &self.trans_prob[r])
    }

    /// Same MDP with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut t = self.to_tables();
        t.gamma = gamma;
        Self::new(t)
    }

    /// Same MDP with a different initial distribution.
    pub fn with_mu(&self, mu: Vec<f64>) -> Result<Self> {
        let mut t = self.to_tables();
        t.mu = mu;
        Self::new(t)
    }
}
