//! Independent learning dynamics and the run loop.
//!
//! All agents update simultaneously from one evaluation of the current
//! joint policy.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::exact::{evaluate, mismatch_bound, MismatchBound};
use crate::model::{softmax_into, Environment, EvalReport, JointPolicy, Logits, MultiAgentMdp};
use crate::sampled::{estimate_eval_at, SampleConfig};
use crate::verify::nash_gap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Natural policy gradient on softmax logits.
    Inpg,
    /// Multiplicative weights on the policy itself.
    Mwu,
    /// Softmax policy gradient.
    Ipg,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Inpg => "inpg",
            Self::Mwu => "mwu",
            Self::Ipg => "ipg",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inpg" => Ok(Self::Inpg),
            "mwu" => Ok(Self::Mwu),
            "ipg" => Ok(Self::Ipg),
            other => Err(Error::InvalidParams(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    Exact,
    Sampled(SampleConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Guard {
    Enforce,
    Warn,
    Off,
}

impl std::str::FromStr for Guard {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enforce" => Ok(Self::Enforce),
            "warn" => Ok(Self::Warn),
            "off" => Ok(Self::Off),
            other => Err(Error::InvalidParams(format!("unknown guard `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub eval_mode: EvalMode,
    pub max_iters: usize,
    pub convergence_threshold: f64,
    /// `None` picks enforce for exact and warn for sampled evaluation.
    pub guard: Option<Guard>,
    /// Replaces the analytic mismatch bound in the guard.
    pub mismatch_override: Option<f64>,
    /// Nash gap every this many iterations (0 = never).
    pub nash_gap_every: usize,
    /// Keep the policy in the trace every this many iterations (0 = final only).
    pub snapshot_every: usize,
}

impl AlgoConfig {
    pub fn new(algorithm: Algorithm, eta: f64, eval_mode: EvalMode) -> Self {
        Self {
            algorithm,
            eta,
            eval_mode,
            max_iters: 1000,
            convergence_threshold: 1e-15,
            guard: None,
            mismatch_override: None,
            nash_gap_every: 0,
            snapshot_every: 0,
        }
    }

    pub fn effective_guard(&self) -> Guard {
        self.guard.unwrap_or(match self.eval_mode {
            EvalMode::Exact => Guard::Enforce,
            EvalMode::Sampled(_) => Guard::Warn,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParams(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be at least 1".into()));
        }
        if !(self.convergence_threshold > 0.0) {
            return Err(Error::InvalidParams("convergence threshold must be positive".into()));
        }
        if let EvalMode::Sampled(s) = &self.eval_mode {
            s.validate()?;
        }
        Ok(())
    }
}

fn check_advantage(layout: &crate::ActionLayout, adv: &[f64]) -> Result<()> {
    if adv.len() != layout.len() {
        return Err(Error::ShapeMismatch(format!(
            "advantage table has {} entries, policy has {}",
            adv.len(),
            layout.len()
        )));
    }
    if let Some(k) = adv.iter().position(|a| !a.is_finite()) {
        let (agent, state, action) = layout.locate(k);
        return Err(Error::NonFinite {
            what: "advantage",
            agent,
            state,
            action,
        });
    }
    Ok(())
}

/// `theta + eta / (1 - gamma) * A`
pub fn inpg_step(theta: &Logits, eval: &EvalReport, eta: f64, gamma: f64) -> Result<Logits> {
    check_advantage(theta.layout(), &eval.advantage)?;
    let c = eta / (1.0 - gamma);
    let delta: Vec<f64> = eval.advantage.iter().map(|a| c * a).collect();
    theta.shifted(&delta)
}

/// `pi * exp(eta / (1 - gamma) * A) / Z`, per agent and state.
pub fn mwu_step(policy: &JointPolicy, eval: &EvalReport, eta: f64, gamma: f64) -> Result<JointPolicy> {
    let layout = policy.layout();
    check_advantage(layout, &eval.advantage)?;
    policy.ensure_interior()?;
    let c = eta / (1.0 - gamma);
    let p = policy.as_slice();
    let mut out = vec![0.0; p.len()];
    let mut logw = Vec::new();
    for i in 0..layout.n_agents() {
        for s in 0..layout.n_states() {
            let r = layout.range(i, s);
            logw.clear();
            logw.extend(r.clone().map(|k| p[k].ln() + c * eval.advantage[k]));
            softmax_into(&logw, &mut out[r]);
        }
    }
    JointPolicy::new(layout.clone(), out)
}

/// Gradient of `V_i(mu)` with respect to agent `i`'s logits for every agent:
/// `d(s) pi_i(a|s) A_i(s, a) / (1 - gamma)`.
pub fn softmax_gradient(mdp: &MultiAgentMdp, policy: &JointPolicy, eval: &EvalReport) -> Vec<f64> {
    let layout = policy.layout();
    let scale = 1.0 / (1.0 - mdp.gamma());
    (0..layout.len())
        .map(|k| {
            let (_, s, _) = layout.locate(k);
            scale * eval.visitation[s] * policy.as_slice()[k] * eval.advantage[k]
        })
        .collect()
}

/// `theta + eta * grad`, with the gradient of [`softmax_gradient`].
pub fn ipg_step(theta: &Logits, mdp: &MultiAgentMdp, eval: &EvalReport, eta: f64) -> Result<Logits> {
    check_advantage(theta.layout(), &eval.advantage)?;
    if eval.visitation.len() != mdp.n_states() {
        return Err(Error::ShapeMismatch("visitation has the wrong length".into()));
    }
    let grad = softmax_gradient(mdp, &theta.softmax(), eval);
    let delta: Vec<f64> = grad.iter().map(|g| eta * g).collect();
    theta.shifted(&delta)
}

/// `(1 - gamma)^3 / (27 n^2 A_max^2 M)`
pub fn step_size_bound(n_agents: usize, a_max: usize, gamma: f64, m: f64) -> f64 {
    let n = n_agents as f64;
    let a = a_max as f64;
    (1.0 - gamma).powi(3) / (27.0 * n * n * a * a * m)
}

/// `27 n^2 A_max^2 M / (1 - gamma)^3`
pub fn smoothness_constant(n_agents: usize, a_max: usize, gamma: f64, m: f64) -> f64 {
    1.0 / step_size_bound(n_agents, a_max, gamma, m)
}

/// Largest admissible step size from the analytic mismatch bound.
pub fn max_step_size(mdp: &MultiAgentMdp, mismatch: &MismatchBound) -> Result<f64> {
    let m = mismatch.upper.ok_or_else(|| {
        Error::MismatchUnavailable(mismatch.note.clone().unwrap_or_else(|| "no analytic bound".into()))
    })?;
    Ok(step_size_bound(mdp.n_agents(), mdp.a_max(), mdp.gamma(), m))
}

#[derive(Debug, Clone)]
pub enum Initial {
    Logits(Logits),
    Policy(JointPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
}

/// Row `iteration` describes update `iteration`: the potential and Nash gap
/// are measured at the policy before the update, the step is the largest
/// per-agent L1 distance it moved.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub max_policy_step_l1: f64,
    pub potential: Option<f64>,
    pub nash_gap: Option<f64>,
    /// Policy after the update, when retained.
    pub policy: Option<JointPolicy>,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub initial_policy: JointPolicy,
    pub final_policy: JointPolicy,
    /// Final logits for the logit-space algorithms.
    pub final_logits: Option<Logits>,
    /// Step-size bound used by the guard, when available.
    pub step_bound: Option<f64>,
}

impl RunTrace {
    /// Number of updates performed.
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }
}

enum Iterate {
    Logits(Logits),
    Policy(JointPolicy),
}

impl Iterate {
    fn policy(&self) -> JointPolicy {
        match self {
            Self::Logits(t) => t.softmax(),
            Self::Policy(p) => p.clone(),
        }
    }
}

fn apply_guard(env: &Environment, cfg: &AlgoConfig) -> Result<Option<f64>> {
    let guard = cfg.effective_guard();
    if guard == Guard::Off {
        return Ok(None);
    }
    let mdp = env.mdp();
    let bound = match cfg.mismatch_override {
        Some(m) => Ok(step_size_bound(mdp.n_agents(), mdp.a_max(), mdp.gamma(), m)),
        None => max_step_size(mdp, &mismatch_bound(mdp, 0)),
    };
    let bound = match (bound, guard) {
        (Ok(b), _) => b,
        (Err(e), Guard::Enforce) => return Err(e),
        (Err(e), _) => {
            warn!("{}: step-size guard skipped: {e}", env.label());
            return Ok(None);
        }
    };
    if cfg.eta >= bound {
        if guard == Guard::Enforce {
            return Err(Error::StepSizeGuard { eta: cfg.eta, bound });
        }
        warn!(
            "{}: step size {:e} is not below the convergence bound {:e}",
            env.label(),
            cfg.eta,
            bound
        );
    }
    Ok(Some(bound))
}

pub fn run(env: &Environment, cfg: &AlgoConfig, initial: Initial) -> Result<RunTrace> {
    run_with_observer(env, cfg, initial, |_, _| {})
}

/// Runs the dynamics; `observer` sees every record together with the policy
/// after the update, whether or not the trace retains it.
pub fn run_with_observer<F>(env: &Environment, cfg: &AlgoConfig, initial: Initial, mut observer: F) -> Result<RunTrace>
where
    F: FnMut(&IterationRecord, &JointPolicy),
{
    cfg.validate()?;
    let mdp = env.mdp();
    let gamma = mdp.gamma();
    let step_bound = apply_guard(env, cfg)?;

    let mut state = match (cfg.algorithm, initial) {
        (Algorithm::Mwu, Initial::Policy(p)) => {
            p.ensure_interior()?;
            Iterate::Policy(p)
        }
        (Algorithm::Mwu, Initial::Logits(t)) => Iterate::Policy(t.softmax()),
        (_, Initial::Logits(t)) => Iterate::Logits(t),
        (_, Initial::Policy(p)) => Iterate::Logits(p.to_logits()?),
    };
    let initial_policy = state.policy();
    if **initial_policy.layout() != **mdp.layout() {
        return Err(Error::ShapeMismatch("initial policy does not match the environment".into()));
    }
    if cfg.algorithm == Algorithm::Inpg {
        initial_policy.ensure_interior()?;
    }

    let mut current = initial_policy.clone();
    let mut records = Vec::new();
    let mut status = RunStatus::MaxIters;
    for k in 0..cfg.max_iters {
        let (eval, potential) = match &cfg.eval_mode {
            EvalMode::Exact => {
                let rep = evaluate(env, &current)?;
                let pot = rep.potential_mu;
                (rep, pot)
            }
            EvalMode::Sampled(sc) => (estimate_eval_at(mdp, &current, sc, k as u64)?, None),
        };
        let nash = if cfg.nash_gap_every > 0 && k % cfg.nash_gap_every == 0 {
            Some(nash_gap(mdp, &current)?.max_gap)
        } else {
            None
        };
        state = match state {
            Iterate::Logits(t) => Iterate::Logits(match cfg.algorithm {
                Algorithm::Ipg => ipg_step(&t, mdp, &eval, cfg.eta)?,
                _ => inpg_step(&t, &eval, cfg.eta, gamma)?,
            }),
            Iterate::Policy(p) => Iterate::Policy(mwu_step(&p, &eval, cfg.eta, gamma)?),
        };
        let next = state.policy();
        let step = next
            .l1_by_agent(&current)?
            .into_iter()
            .fold(0.0, f64::max);
        let done = step < cfg.convergence_threshold;
        let keep = cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0;
        let mut rec = IterationRecord {
            iteration: k,
            max_policy_step_l1: step,
            potential,
            nash_gap: nash,
            policy: None,
        };
        observer(&rec, &next);
        if keep {
            rec.policy = Some(next.clone());
        }
        records.push(rec);
        current = next;
        if done {
            status = RunStatus::Converged;
            break;
        }
    }
    if let Some(last) = records.last_mut() {
        if last.policy.is_none() && cfg.snapshot_every > 0 {
            last.policy = Some(current.clone());
        }
    }
    info!(
        "{} {}: {} iterations, {:?}",
        env.label(),
        cfg.algorithm.name(),
        records.len(),
        status
    );
    let final_logits = match &state {
        Iterate::Logits(t) => Some(t.clone()),
        Iterate::Policy(_) => None,
    };
    Ok(RunTrace {
        algorithm: cfg.algorithm,
        eta: cfg.eta,
        records,
        status,
        initial_policy,
        final_policy: current,
        final_logits,
        step_bound,
    })
}

#[cfg(test)]
mod tests;
