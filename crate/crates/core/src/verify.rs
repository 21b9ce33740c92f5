//! Checks for equilibrium and potential-game properties.

use rand::Rng;

use crate::dynamics::{smoothness_constant, softmax_gradient};
use crate::exact::{evaluate, mismatch_bound, ExactEvaluator, PolicySolver, SolverKind, SparseMatrix};
use crate::model::{decode_joint, Environment, JointPolicy, Logits, MultiAgentMdp};
use crate::{Error, Result};

/// Single-agent MDP seen by `agent` when the other agents are frozen.
struct InducedMdp {
    /// `rewards[s][a_i]`
    rewards: Vec<Vec<f64>>,
    /// `transitions[s][a_i]`, sorted by target
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

fn induced_mdp(mdp: &MultiAgentMdp, policy: &JointPolicy, agent: usize) -> InducedMdp {
    let n = mdp.n_agents();
    let ns = mdp.n_states();
    let layout = mdp.layout();
    let mut digits = vec![0usize; n];
    let mut rewards = Vec::with_capacity(ns);
    let mut transitions = Vec::with_capacity(ns);
    let mut scratch = vec![0.0f64; ns];
    for s in 0..ns {
        let counts = layout.counts_at(s);
        let k = counts[agent];
        let mut r = vec![0.0; k];
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k];
        let mut acc: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        for (a, row) in mdp.joint_range(s).enumerate() {
            decode_joint(a, counts, &mut digits);
            let mut w = 1.0;
            for (j, &d) in digits.iter().enumerate() {
                if j != agent {
                    w *= policy.prob(j, s, d);
                }
            }
            let ai = digits[agent];
            r[ai] += w * mdp.rewards(agent)[row];
            let (succ, prob) = mdp.transition_row(row);
            for (&t, &p) in succ.iter().zip(prob) {
                acc[ai].push((t, w * p));
                rows[ai].push(t);
            }
        }
        let mut per_action = Vec::with_capacity(k);
        for (ai, entries) in acc.into_iter().enumerate() {
            for &(t, p) in &entries {
                scratch[t] += p;
            }
            let mut targets = std::mem::take(&mut rows[ai]);
            targets.sort_unstable();
            targets.dedup();
            let row: Vec<(usize, f64)> = targets.iter().map(|&t| (t, scratch[t])).collect();
            for &t in &targets {
                scratch[t] = 0.0;
            }
            per_action.push(row);
        }
        rewards.push(r);
        transitions.push(per_action);
    }
    InducedMdp { rewards, transitions }
}

impl InducedMdp {
    fn q(&self, gamma: f64, values: &[f64], s: usize, a: usize) -> f64 {
        let ev: f64 = self.transitions[s][a].iter().map(|&(t, p)| p * values[t]).sum();
        self.rewards[s][a] + gamma * ev
    }

    fn evaluate(&self, gamma: f64, actions: &[usize]) -> Result<Vec<f64>> {
        let ns = actions.len();
        let rows: Vec<Vec<(usize, f64)>> = (0..ns).map(|s| self.transitions[s][actions[s]].clone()).collect();
        let r: Vec<f64> = (0..ns).map(|s| self.rewards[s][actions[s]]).collect();
        PolicySolver::new(&SparseMatrix::from_rows(ns, rows), gamma, SolverKind::Auto).solve(&r)
    }
}

/// Deterministic best response of one agent and its optimal values.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub agent: usize,
    /// Chosen action per state.
    pub actions: Vec<usize>,
    /// Optimal value per start state.
    pub values: Vec<f64>,
    /// `max_s |max_a Q(s, a) - V(s)|` at the returned values.
    pub bellman_residual: f64,
}

impl BestResponse {
    /// The joint policy with `agent` replaced by this best response.
    pub fn apply(&self, policy: &JointPolicy) -> JointPolicy {
        let layout = policy.layout().clone();
        let mut probs = policy.as_slice().to_vec();
        for s in 0..layout.n_states() {
            let range = layout.range(self.agent, s);
            for (a, p) in probs[range].iter_mut().enumerate() {
                *p = if a == self.actions[s] { 1.0 } else { 0.0 };
            }
        }
        JointPolicy::new(layout, probs).expect("deterministic rows are on the simplex")
    }
}

/// Best response of `agent` to the other agents' policies by policy
/// iteration on the induced single-agent MDP.
pub fn best_response(mdp: &MultiAgentMdp, policy: &JointPolicy, agent: usize) -> Result<BestResponse> {
    if agent >= mdp.n_agents() {
        return Err(Error::InvalidParams(format!("agent {agent} out of range")));
    }
    let g = mdp.gamma();
    let ind = induced_mdp(mdp, policy, agent);
    let ns = mdp.n_states();
    let mut actions: Vec<usize> = (0..ns)
        .map(|s| argmax(policy.dist(agent, s)))
        .collect();
    let mut values = ind.evaluate(g, &actions)?;
    for _ in 0..100_000 {
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut changed = false;
        for s in 0..ns {
            let current = ind.q(g, &values, s, actions[s]);
            let (best, q_best) = (0..ind.rewards[s].len())
                .map(|a| (a, ind.q(g, &values, s, a)))
                .fold((actions[s], current), |acc, x| if x.1 > acc.1 { x } else { acc });
            if q_best > current + 1e-13 * scale {
                actions[s] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        values = ind.evaluate(g, &actions)?;
    }
    let bellman_residual = (0..ns)
        .map(|s| {
            let best = (0..ind.rewards[s].len())
                .map(|a| ind.q(g, &values, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            (best - values[s]).abs()
        })
        .fold(0.0, f64::max);
    Ok(BestResponse {
        agent,
        actions,
        values,
        bellman_residual,
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct NashReport {
    /// `gaps[i][s] = V_i^BR(s) - V_i(s)`
    pub gaps: Vec<Vec<f64>>,
    /// Max over agents and states.
    pub max_gap: f64,
    /// Per agent `sum_s mu(s) gaps[i][s]`.
    pub mu_gaps: Vec<f64>,
    /// Max over agents of the mu-weighted gap.
    pub max_mu_gap: f64,
}

impl NashReport {
    pub fn is_epsilon_nash(&self, eps: f64) -> bool {
        self.max_gap <= eps
    }
}

/// Per-state gap of one agent.
pub fn agent_gap(mdp: &MultiAgentMdp, policy: &JointPolicy, agent: usize) -> Result<Vec<f64>> {
    let br = best_response(mdp, policy, agent)?;
    let v = ExactEvaluator::new(mdp, policy)?.value(agent)?;
    Ok(br.values.iter().zip(&v).map(|(b, x)| b - x).collect())
}

pub fn nash_gap(mdp: &MultiAgentMdp, policy: &JointPolicy) -> Result<NashReport> {
    let ev = ExactEvaluator::new(mdp, policy)?;
    let values = ev.values()?;
    let mut gaps = Vec::with_capacity(mdp.n_agents());
    for (i, v) in values.iter().enumerate() {
        let br = best_response(mdp, policy, i)?;
        gaps.push(br.values.iter().zip(v).map(|(b, x)| b - x).collect::<Vec<f64>>());
    }
    let max_gap = gaps.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let mu_gaps: Vec<f64> = gaps
        .iter()
        .map(|g| g.iter().zip(mdp.mu()).map(|(x, m)| x * m).sum())
        .collect();
    let max_mu_gap = mu_gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(NashReport {
        gaps,
        max_gap,
        mu_gaps,
        max_mu_gap,
    })
}

/// `max_s |(Phi' - Phi)(s) - (V_i' - V_i)(s)|` when agent `agent` switches
/// from its policy in `policy` to its policy in `deviation`.
pub fn potential_mismatch(
    env: &Environment,
    policy: &JointPolicy,
    agent: usize,
    deviation: &JointPolicy,
) -> Result<(f64, usize)> {
    let moved = policy.with_agent_from(agent, deviation)?;
    let a = evaluate_phi_v(env, policy, agent)?;
    let b = evaluate_phi_v(env, &moved, agent)?;
    let mut worst = (0.0f64, 0usize);
    for s in 0..env.mdp().n_states() {
        let d = ((b.0[s] - a.0[s]) - (b.1[s] - a.1[s])).abs();
        if d > worst.0 {
            worst = (d, s);
        }
    }
    Ok(worst)
}

fn evaluate_phi_v(env: &Environment, policy: &JointPolicy, agent: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let ev = ExactEvaluator::new(env.mdp(), policy)?;
    let (phi, _) = ev.potential(env)?;
    Ok((phi, ev.value(agent)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialCheck {
    pub max_mismatch: f64,
    pub trials: usize,
    /// `(trial, agent, state)` of the largest mismatch.
    pub worst: (usize, usize, usize),
}

/// Random unilateral deviations; policies are softmax of `N(0, logit_scale^2)` logits.
pub fn check_potential<R: Rng + ?Sized>(
    env: &Environment,
    trials: usize,
    logit_scale: f64,
    rng: &mut R,
) -> Result<PotentialCheck> {
    if env.stage_potential().is_none() {
        return Err(Error::MissingPotential(env.label().to_string()));
    }
    let layout = env.mdp().layout().clone();
    let mut out = PotentialCheck {
        max_mismatch: 0.0,
        trials,
        worst: (0, 0, 0),
    };
    for t in 0..trials {
        let pi = Logits::random_normal(layout.clone(), logit_scale, rng).softmax();
        let dev = Logits::random_normal(layout.clone(), logit_scale, rng).softmax();
        let agent = rng.random_range(0..env.mdp().n_agents());
        let (m, s) = potential_mismatch(env, &pi, agent, &dev)?;
        if m > out.max_mismatch {
            out.max_mismatch = m;
            out.worst = (t, agent, s);
        }
    }
    Ok(out)
}

/// Sum of the movers' value changes around the closed deviation loop
/// `pi -> (pi_i', pi_j) -> (pi_i', pi_j') -> (pi_i, pi_j') -> pi`, maximised over
/// states. Any exact potential forces this to zero, so a nonzero value
/// shows that no potential function exists for the game.
pub fn exchange_defect(
    mdp: &MultiAgentMdp,
    policy: &JointPolicy,
    i: usize,
    dev_i: &JointPolicy,
    j: usize,
    dev_j: &JointPolicy,
) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidParams("the loop needs two distinct agents".into()));
    }
    let p1 = policy.with_agent_from(i, dev_i)?;
    let p2 = p1.with_agent_from(j, dev_j)?;
    let p3 = policy.with_agent_from(j, dev_j)?;
    let v = |p: &JointPolicy, a: usize| ExactEvaluator::new(mdp, p)?.value(a);
    let (vi0, vi1, vi2, vi3) = (v(policy, i)?, v(&p1, i)?, v(&p2, i)?, v(&p3, i)?);
    let (vj0, vj1, vj2, vj3) = (v(policy, j)?, v(&p1, j)?, v(&p2, j)?, v(&p3, j)?);
    Ok((0..mdp.n_states())
        .map(|s| ((vi1[s] - vi0[s]) + (vj2[s] - vj1[s]) + (vi3[s] - vi2[s]) + (vj0[s] - vj3[s])).abs())
        .fold(0.0, f64::max))
}

/// Central differences `(f(theta + h e_k) - f(theta - h e_k)) / 2h` for every coordinate.
pub fn finite_diff_grad<F>(mut f: F, theta: &Logits, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&Logits) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParams(format!("step h must be positive, got {h}")));
    }
    (0..theta.as_slice().len())
        .map(|k| {
            let plus = f(&theta.bumped(k, h))?;
            let minus = f(&theta.bumped(k, -h))?;
            if !(plus.is_finite() && minus.is_finite()) {
                let (agent, state, action) = theta.layout().locate(k);
                return Err(Error::NonFinite {
                    what: "finite-difference evaluation",
                    agent,
                    state,
                    action,
                });
            }
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Normwise relative errors `|a - b|_inf / |b|_inf` between gradient estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// Finite differences of `V_i(mu)` in agent `i`'s own logits against the closed form.
    pub v_vs_closed: f64,
    /// Finite differences of `Phi(mu)` against those of `V_i(mu)`; `None` without a potential.
    pub phi_vs_v: Option<f64>,
    pub phi_vs_closed: Option<f64>,
    /// Same comparison against `d pi A_bar` without the `1/(1 - gamma)` factor.
    pub v_vs_unscaled: f64,
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let norm = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Compares central differences of the potential and of each agent's value
/// with the closed-form softmax gradient at `theta`.
pub fn check_gradient(env: &Environment, theta: &Logits, h: f64) -> Result<GradientCheck> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParams(format!("step h must be positive, got {h}")));
    }
    let mdp = env.mdp();
    let layout = theta.layout().clone();
    let pi = theta.softmax();
    let closed = softmax_gradient(mdp, &pi, &evaluate(env, &pi)?);
    let with_potential = env.stage_potential().is_some();
    let mut fd_v = vec![0.0; layout.len()];
    let mut fd_phi = vec![0.0; layout.len()];
    for k in 0..layout.len() {
        let (agent, _, _) = layout.locate(k);
        let plus = evaluate(env, &theta.bumped(k, h).softmax())?;
        let minus = evaluate(env, &theta.bumped(k, -h).softmax())?;
        fd_v[k] = (plus.value_mu(agent, mdp.mu()) - minus.value_mu(agent, mdp.mu())) / (2.0 * h);
        if with_potential {
            fd_phi[k] = (plus.potential_mu.unwrap_or(0.0) - minus.potential_mu.unwrap_or(0.0)) / (2.0 * h);
        }
    }
    let unscaled: Vec<f64> = closed.iter().map(|g| g * (1.0 - mdp.gamma())).collect();
    Ok(GradientCheck {
        v_vs_closed: rel_inf(&fd_v, &closed),
        phi_vs_v: with_potential.then(|| rel_inf(&fd_phi, &fd_v)),
        phi_vs_closed: with_potential.then(|| rel_inf(&fd_phi, &closed)),
        v_vs_unscaled: rel_inf(&fd_v, &unscaled),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessReport {
    /// `-Phi(theta_tilde)`
    pub lhs: f64,
    /// `-Phi(theta) - <grad Phi(theta), delta> + L/2 |delta|_D^2`
    pub rhs: f64,
    pub l_const: f64,
    /// `|delta|_D^2` with `D = diag(d(s) pi_i(a|s))` at `theta`.
    pub d_norm_sq: f64,
    /// Extremes of `pi_theta / pi_theta_tilde` over all entries.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `[1 - 2 eta / (1 - gamma), 1 + 4 eta / (1 - gamma)]`
    pub ratio_bounds: (f64, f64),
    pub ratios_ok: bool,
    pub pass: bool,
}

/// Evaluates the smoothness inequality of the potential at `(theta, theta_tilde)`.
///
/// `m_upper` is an upper bound on the mismatch coefficient; when `None` the
/// analytic bound of the environment is used.
pub fn check_smoothness(
    env: &Environment,
    theta: &Logits,
    theta_tilde: &Logits,
    eta: f64,
    m_upper: Option<f64>,
) -> Result<SmoothnessReport> {
    let mdp = env.mdp();
    let g = mdp.gamma();
    let limit = eta / (1.0 - g);
    let layout = theta.layout();
    for (k, (a, b)) in theta.as_slice().iter().zip(theta_tilde.as_slice()).enumerate() {
        let disp = (b - a).abs();
        if disp > limit * (1.0 + 1e-12) {
            let (agent, state, action) = layout.locate(k);
            return Err(Error::Hypothesis {
                agent,
                state,
                action,
                displacement: disp,
                limit,
            });
        }
    }
    let m = match m_upper {
        Some(m) => m,
        None => mismatch_bound(mdp, 0)
            .upper
            .ok_or_else(|| Error::MismatchUnavailable(env.label().to_string()))?,
    };
    let l_const = smoothness_constant(mdp.n_agents(), mdp.a_max(), g, m);

    let pi = theta.softmax();
    let pi_t = theta_tilde.softmax();
    let rep = evaluate(env, &pi)?;
    let phi = rep.potential_mu.ok_or_else(|| Error::MissingPotential(env.label().to_string()))?;
    let phi_t = evaluate(env, &pi_t)?.potential_mu.unwrap();
    let grad = softmax_gradient(mdp, &pi, &rep);

    let mut inner = 0.0;
    let mut d_norm_sq = 0.0;
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = f64::NEG_INFINITY;
    for k in 0..layout.len() {
        let (_, s, _) = layout.locate(k);
        let delta = theta_tilde.as_slice()[k] - theta.as_slice()[k];
        inner += grad[k] * delta;
        d_norm_sq += rep.visitation[s] * pi.as_slice()[k] * delta * delta;
        let r = pi.as_slice()[k] / pi_t.as_slice()[k];
        ratio_min = ratio_min.min(r);
        ratio_max = ratio_max.max(r);
    }
    let lhs = -phi_t;
    let rhs = -phi - inner + 0.5 * l_const * d_norm_sq;
    let ratio_bounds = (1.0 - 2.0 * limit, 1.0 + 4.0 * limit);
    let ratios_ok = ratio_min >= ratio_bounds.0 && ratio_max <= ratio_bounds.1;
    Ok(SmoothnessReport {
        lhs,
        rhs,
        l_const,
        d_norm_sq,
        ratio_min,
        ratio_max,
        ratio_bounds,
        ratios_ok,
        pass: lhs <= rhs + 1e-9,
    })
}

/// `max_{i,s,a} min(pi_i(a|s), |A_i(s,a)|)`; zero exactly at fixed points of
/// the multiplicative-weights dynamics.
pub fn fixed_point_residual(mdp: &MultiAgentMdp, policy: &JointPolicy) -> Result<f64> {
    let rep = ExactEvaluator::new(mdp, policy)?.report()?;
    Ok(policy
        .as_slice()
        .iter()
        .zip(&rep.advantage)
        .map(|(p, a)| p.min(a.abs()))
        .fold(0.0, f64::max))
}
