//! Exact policy evaluation through the Markov chain a joint policy induces.
//!
//! Every quantity reduces to solves against `I - gamma P_pi`: values and the
//! potential use the matrix itself, visitation uses its transpose. One
//! factorisation is shared by all of them.

mod mismatch;
mod solver;

pub use mismatch::{mismatch_bound, reachable_states, BoundMethod, MismatchBound};
pub use solver::{PolicySolver, SolverKind, SparseMatrix, DENSE_LIMIT};

use crate::model::{decode_joint, Environment, EvalReport, JointPolicy, MultiAgentMdp};
use crate::{Error, Result};

/// State chain and expected one-step rewards under a joint policy.
#[derive(Debug, Clone)]
pub struct InducedChain {
    /// `p_pi(s, s') = sum_a pi(a|s) P(s'|s, a)`
    pub p_pi: SparseMatrix,
    /// `r_pi[i][s] = sum_a pi(a|s) r_i(s, a)`
    pub r_pi: Vec<Vec<f64>>,
}

/// Builds the induced chain. Summation runs over joint actions in index order.
pub fn induced_chain(mdp: &MultiAgentMdp, policy: &JointPolicy) -> Result<InducedChain> {
    check_layout(mdp, policy)?;
    let n = mdp.n_states();
    let mut rows = Vec::with_capacity(n);
    let mut r_pi = vec![vec![0.0; n]; mdp.n_agents()];
    let mut jp = Vec::new();
    let mut scratch = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    for s in 0..n {
        policy.joint_probs(s, &mut jp);
        for (a, &w) in jp.iter().enumerate() {
            let row = mdp.joint_range(s).start + a;
            for (i, r) in r_pi.iter_mut().enumerate() {
                r[s] += w * mdp.rewards(i)[row];
            }
            let (next, prob) = mdp.transition_row(row);
            for (&t, &p) in next.iter().zip(prob) {
                if scratch[t] == 0.0 && !touched.contains(&t) {
                    touched.push(t);
                }
                scratch[t] += w * p;
            }
        }
        touched.sort_unstable();
        let mut row = Vec::with_capacity(touched.len());
        for &t in &touched {
            if scratch[t] != 0.0 {
                row.push((t, scratch[t]));
            }
            scratch[t] = 0.0;
        }
        touched.clear();
        rows.push(row);
    }
    Ok(InducedChain {
        p_pi: SparseMatrix::from_rows(n, rows),
        r_pi,
    })
}

/// Exact evaluator for one `(mdp, policy)` pair; factorises once.
pub struct ExactEvaluator<'a> {
    mdp: &'a MultiAgentMdp,
    policy: &'a JointPolicy,
    chain: InducedChain,
    solver: PolicySolver,
}

impl<'a> ExactEvaluator<'a> {
    pub fn new(mdp: &'a MultiAgentMdp, policy: &'a JointPolicy) -> Result<Self> {
        Self::with_solver(mdp, policy, SolverKind::Auto)
    }

    pub fn with_solver(mdp: &'a MultiAgentMdp, policy: &'a JointPolicy, kind: SolverKind) -> Result<Self> {
        let chain = induced_chain(mdp, policy)?;
        let solver = PolicySolver::new(&chain.p_pi, mdp.gamma(), kind);
        Ok(Self {
            mdp,
            policy,
            chain,
            solver,
        })
    }

    pub fn chain(&self) -> &InducedChain {
        &self.chain
    }

    pub fn solver(&self) -> &PolicySolver {
        &self.solver
    }

    /// `V_i` solving `(I - gamma P_pi) V_i = r_pi,i`.
    pub fn value(&self, agent: usize) -> Result<Vec<f64>> {
        self.solver.solve(&self.chain.r_pi[agent])
    }

    pub fn values(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.mdp.n_agents()).map(|i| self.value(i)).collect()
    }

    /// `Q_i(s, a) = r_i(s, a) + gamma sum_s' P(s'|s, a) V_i(s')` over flat rows.
    pub fn q(&self, agent: usize, values: &[f64]) -> Vec<f64> {
        backup(self.mdp, self.mdp.rewards(agent), values)
    }

    /// Discounted visitation `d = (1 - gamma) mu^T (I - gamma P_pi)^-1`.
    pub fn visitation(&self) -> Result<Vec<f64>> {
        let g = self.mdp.gamma();
        let rhs: Vec<f64> = self.mdp.mu().iter().map(|m| (1.0 - g) * m).collect();
        self.solver.solve_transpose(&rhs)
    }

    /// Potential value per state and at `mu`.
    pub fn potential(&self, env: &Environment) -> Result<(Vec<f64>, f64)> {
        let phi = env
            .stage_potential()
            .ok_or_else(|| Error::MissingPotential(env.label().to_string()))?;
        let rhs = expected_rows(self.mdp, self.policy, phi);
        let pot = self.solver.solve(&rhs)?;
        let at_mu = dot(&pot, self.mdp.mu());
        Ok((pot, at_mu))
    }

    /// Everything except the potential.
    pub fn report(&self) -> Result<EvalReport> {
        let values = self.values()?;
        let q: Vec<Vec<f64>> = values.iter().enumerate().map(|(i, v)| self.q(i, v)).collect();
        let advantage = marginal_advantages(self.mdp, self.policy, &q, &values);
        let visitation = self.visitation()?;
        Ok(EvalReport {
            values,
            q,
            advantage,
            visitation,
            potential: None,
            potential_mu: None,
            unvisited: None,
        })
    }
}

/// Exact report of `policy`, including the potential when `env` carries one.
pub fn evaluate(env: &Environment, policy: &JointPolicy) -> Result<EvalReport> {
    let ev = ExactEvaluator::new(env.mdp(), policy)?;
    let mut report = ev.report()?;
    if env.stage_potential().is_some() {
        let (pot, at_mu) = ev.potential(env)?;
        report.potential = Some(pot);
        report.potential_mu = Some(at_mu);
    }
    Ok(report)
}

pub fn value_functions(mdp: &MultiAgentMdp, policy: &JointPolicy) -> Result<Vec<Vec<f64>>> {
    ExactEvaluator::new(mdp, policy)?.values()
}

/// `(Q_i over flat rows, marginal advantage of agent i indexed like the policy's agent block)`.
pub fn q_and_advantage(mdp: &MultiAgentMdp, policy: &JointPolicy, agent: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let ev = ExactEvaluator::new(mdp, policy)?;
    let values = ev.values()?;
    let q: Vec<Vec<f64>> = values.iter().enumerate().map(|(i, v)| ev.q(i, v)).collect();
    let adv = marginal_advantages(mdp, policy, &q, &values);
    let block = adv[mdp.layout().agent_range(agent)].to_vec();
    Ok((q.into_iter().nth(agent).unwrap(), block))
}

pub fn visitation(mdp: &MultiAgentMdp, policy: &JointPolicy) -> Result<Vec<f64>> {
    ExactEvaluator::new(mdp, policy)?.visitation()
}

pub fn potential_value(env: &Environment, policy: &JointPolicy) -> Result<(Vec<f64>, f64)> {
    if env.stage_potential().is_none() {
        return Err(Error::MissingPotential(env.label().to_string()));
    }
    ExactEvaluator::new(env.mdp(), policy)?.potential(env)
}

/// One-step backup `table(s, a) + gamma E[next(s')]` over flat rows.
pub(crate) fn backup(mdp: &MultiAgentMdp, table: &[f64], next: &[f64]) -> Vec<f64> {
    let g = mdp.gamma();
    (0..mdp.n_rows())
        .map(|row| {
            let (succ, prob) = mdp.transition_row(row);
            let ev: f64 = succ.iter().zip(prob).map(|(&t, &p)| p * next[t]).sum();
            table[row] + g * ev
        })
        .collect()
}

/// `sum_a pi(a|s) table(s, a)` for every state.
pub(crate) fn expected_rows(mdp: &MultiAgentMdp, policy: &JointPolicy, table: &[f64]) -> Vec<f64> {
    let mut jp = Vec::new();
    (0..mdp.n_states())
        .map(|s| {
            policy.joint_probs(s, &mut jp);
            let rows = mdp.joint_range(s);
            jp.iter().zip(&table[rows]).map(|(w, x)| w * x).sum()
        })
        .collect()
}

/// Marginal advantages of every agent, indexed like the policy.
///
/// For agent `i` at state `s` the weight of a joint action is the product of
/// the other agents' probabilities, formed from prefix and suffix products so
/// that a zero probability for agent `i` itself does not matter.
pub fn marginal_advantages(
    mdp: &MultiAgentMdp,
    policy: &JointPolicy,
    q: &[Vec<f64>],
    values: &[Vec<f64>],
) -> Vec<f64> {
    let layout = mdp.layout();
    let n = mdp.n_agents();
    let mut adv = vec![0.0; layout.len()];
    let mut digits = vec![0usize; n];
    let mut prefix = vec![1.0; n + 1];
    let mut suffix = vec![1.0; n + 1];
    for s in 0..mdp.n_states() {
        let counts = layout.counts_at(s);
        let rows = mdp.joint_range(s);
        for (a, row) in rows.enumerate() {
            decode_joint(a, counts, &mut digits);
            for j in 0..n {
                prefix[j + 1] = prefix[j] * policy.prob(j, s, digits[j]);
            }
            for j in (0..n).rev() {
                suffix[j] = suffix[j + 1] * policy.prob(j, s, digits[j]);
            }
            for i in 0..n {
                let w = prefix[i] * suffix[i + 1];
                adv[layout.index(i, s, digits[i])] += w * q[i][row];
            }
        }
        for (i, v) in values.iter().enumerate() {
            for x in &mut adv[layout.range(i, s)] {
                *x -= v[s];
            }
        }
    }
    adv
}

fn check_layout(mdp: &MultiAgentMdp, policy: &JointPolicy) -> Result<()> {
    if **mdp.layout() != **policy.layout() {
        return Err(Error::ShapeMismatch(
            "policy layout does not match the MDP's action sets".into(),
        ));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
