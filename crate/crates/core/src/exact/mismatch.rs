use std::collections::VecDeque;

use super::{PolicySolver, SolverKind};
use crate::model::{decode_joint, JointPolicy, MultiAgentMdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMethod {
    Analytic,
    Enumeration,
}

/// Bounds on the distribution mismatch coefficient
/// `M = max_{pi, pi'} || d^pi_mu / d^pi'_mu ||_inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchBound {
    /// `1 / ((1 - gamma) min_{mu(s) > 0} mu(s))` when every reachable state has `mu(s) > 0`.
    pub upper: Option<f64>,
    /// Max visitation ratio over deterministic joint policies (diagnostic only).
    pub enumerated_lower: Option<f64>,
    pub method: BoundMethod,
    /// Why `upper` is missing.
    pub note: Option<String>,
}

/// States reachable from the support of `mu` under some joint action sequence.
pub fn reachable_states(mdp: &MultiAgentMdp) -> Vec<bool> {
    let mut seen = vec![false; mdp.n_states()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (s, &m) in mdp.mu().iter().enumerate() {
        if m > 0.0 {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        for row in mdp.joint_range(s) {
            let (next, prob) = mdp.transition_row(row);
            for (&t, &p) in next.iter().zip(prob) {
                if p > 0.0 && !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    seen
}

/// Analytic upper bound on `M`, plus an enumerated lower bound over all
/// deterministic joint policies when their number is at most
/// `enumeration_budget`.
///
/// The upper bound uses `d(s) <= 1` and `d(s) >= (1 - gamma) mu(s)`.
pub fn mismatch_bound(mdp: &MultiAgentMdp, enumeration_budget: u64) -> MismatchBound {
    let g = mdp.gamma();
    let reach = reachable_states(mdp);
    let starved: Vec<usize> = (0..mdp.n_states())
        .filter(|&s| reach[s] && mdp.mu()[s] <= 0.0)
        .collect();
    let (upper, note) = if starved.is_empty() {
        let min_mu = mdp
            .mu()
            .iter()
            .copied()
            .filter(|&m| m > 0.0)
            .fold(f64::INFINITY, f64::min);
        (Some(1.0 / ((1.0 - g) * min_mu)), None)
    } else {
        (
            None,
            Some(format!(
                "{} reachable state(s) have zero initial mass (first: {}); the visitation ratio may be unbounded",
                starved.len(),
                starved[0]
            )),
        )
    };

    let enumerated_lower = enumerate_lower(mdp, enumeration_budget);
    let method = if upper.is_some() {
        BoundMethod::Analytic
    } else {
        BoundMethod::Enumeration
    };
    MismatchBound {
        upper,
        enumerated_lower,
        method,
        note,
    }
}

fn enumerate_lower(mdp: &MultiAgentMdp, budget: u64) -> Option<f64> {
    let layout = mdp.layout().clone();
    let n = mdp.n_states();
    let radices: Vec<usize> = (0..n).map(|s| layout.joint_count(s)).collect();
    let mut total: u64 = 1;
    for &r in &radices {
        total = total.checked_mul(r as u64)?;
        if total > budget {
            return None;
        }
    }
    let mut hi = vec![0.0f64; n];
    let mut lo = vec![f64::INFINITY; n];
    let mut choice = vec![0usize; n];
    let mut digits = vec![0usize; mdp.n_agents()];
    let rhs: Vec<f64> = mdp.mu().iter().map(|m| (1.0 - mdp.gamma()) * m).collect();
    loop {
        let policy = JointPolicy::deterministic(layout.clone(), |i, s| {
            decode_joint(choice[s], layout.counts_at(s), &mut digits);
            digits[i]
        });
        let chain = super::induced_chain(mdp, &policy).ok()?;
        let solver = PolicySolver::new(&chain.p_pi, mdp.gamma(), SolverKind::Auto);
        let d = solver.solve_transpose(&rhs).ok()?;
        for s in 0..n {
            hi[s] = hi[s].max(d[s]);
            lo[s] = lo[s].min(d[s]);
        }
        if !crate::model::next_joint(&mut choice, &radices) {
            break;
        }
    }
    let mut ratio = 1.0f64;
    for s in 0..n {
        // Visitation below this is treated as zero (solver round-off).
        if hi[s] > 1e-14 {
            ratio = ratio.max(if lo[s] > 1e-14 { hi[s] / lo[s] } else { f64::INFINITY });
        }
    }
    Some(ratio)
}
