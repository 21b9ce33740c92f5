//! The `verify` command: potential identity, gradient identity, smoothness
//! sampling and brute-force best responses on tiny instances.

use std::fmt;

use anyhow::Result;
use mpg_core::dynamics::max_step_size;
use mpg_core::exact::{mismatch_bound, value_functions};
use mpg_core::model::next_joint;
use mpg_core::rng::stream_rng;
use mpg_core::verify::{best_response, check_gradient, check_potential, check_smoothness};
use mpg_core::{Environment, Error, JointPolicy, Logits};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub label: String,
    pub checks: Vec<CheckLine>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

/// Tuning of the verification sweep.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub potential_trials: usize,
    pub gradient_points: usize,
    pub smoothness_pairs: usize,
    /// Largest number of deterministic policies per agent to enumerate.
    pub brute_force_limit: u64,
    /// Largest logit table for finite differences.
    pub gradient_limit: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            potential_trials: 200,
            gradient_points: 5,
            smoothness_pairs: 100,
            brute_force_limit: 4096,
            gradient_limit: 4000,
        }
    }
}

const TOL_POTENTIAL: f64 = 1e-9;
const TOL_GRADIENT: f64 = 1e-6;
const TOL_BR: f64 = 1e-9;

fn line(name: &'static str, ok: bool, detail: String) -> CheckLine {
    CheckLine {
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn skip(name: &'static str, detail: impl Into<String>) -> CheckLine {
    CheckLine {
        name,
        status: Status::Skip,
        detail: detail.into(),
    }
}

fn errored(name: &'static str, e: Error) -> CheckLine {
    line(name, false, format!("error: {e}"))
}

fn potential_line(env: &Environment, opts: &VerifyOptions) -> CheckLine {
    const NAME: &str = "potential identity";
    if env.stage_potential().is_none() {
        return skip(NAME, "environment has no stage potential");
    }
    match check_potential(env, opts.potential_trials, 1.0, &mut stream_rng(opts.seed, 0, 0)) {
        Ok(c) => line(
            NAME,
            c.max_mismatch <= TOL_POTENTIAL,
            format!("max |dPhi - dV_i| = {:.3e} over {} deviations (tolerance {TOL_POTENTIAL:e})", c.max_mismatch, c.trials),
        ),
        Err(e) => errored(NAME, e),
    }
}

fn gradient_line(env: &Environment, opts: &VerifyOptions) -> CheckLine {
    const NAME: &str = "gradient identity";
    let layout = env.mdp().layout().clone();
    if layout.len() > opts.gradient_limit {
        return skip(NAME, format!("{} logits exceed the finite-difference limit {}", layout.len(), opts.gradient_limit));
    }
    let mut rng = stream_rng(opts.seed, 1, 0);
    let (mut v_err, mut phi_err) = (0.0f64, None::<f64>);
    for _ in 0..opts.gradient_points {
        let theta = Logits::random_normal(layout.clone(), 1.0, &mut rng);
        match check_gradient(env, &theta, 1e-5) {
            Ok(g) => {
                v_err = v_err.max(g.v_vs_closed);
                if let (Some(a), Some(b)) = (g.phi_vs_v, g.phi_vs_closed) {
                    phi_err = Some(phi_err.unwrap_or(0.0).max(a).max(b));
                }
            }
            Err(e) => return errored(NAME, e),
        }
    }
    let ok = v_err <= TOL_GRADIENT && phi_err.is_none_or(|p| p <= TOL_GRADIENT);
    let phi = phi_err.map(|p| format!("{p:.3e}")).unwrap_or_else(|| "n/a".into());
    line(
        NAME,
        ok,
        format!("relative error: V vs closed form {v_err:.3e}, Phi {phi} at {} points", opts.gradient_points),
    )
}

fn smoothness_line(env: &Environment, eta: Option<f64>, opts: &VerifyOptions) -> CheckLine {
    const NAME: &str = "smoothness";
    if env.stage_potential().is_none() {
        return skip(NAME, "environment has no stage potential");
    }
    let mdp = env.mdp();
    let bound = mismatch_bound(mdp, 1 << 16);
    let Some(m) = bound.upper else {
        return skip(NAME, format!("no mismatch bound: {}", bound.note.unwrap_or_default()));
    };
    let eta = eta.unwrap_or_else(|| max_step_size(mdp, &bound).map(|b| 0.9 * b).unwrap_or(1e-3));
    let g = mdp.gamma();
    let limit = eta / (1.0 - g);
    let layout = mdp.layout().clone();
    let mut rng = stream_rng(opts.seed, 2, 0);
    let (mut bad_ineq, mut bad_ratio, mut worst) = (0, 0, f64::NEG_INFINITY);
    for _ in 0..opts.smoothness_pairs {
        let theta = Logits::random_normal(layout.clone(), 1.0, &mut rng);
        let delta: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-limit..=limit)).collect();
        let tilde = theta.shifted(&delta).expect("finite shift");
        match check_smoothness(env, &theta, &tilde, eta, Some(m)) {
            Ok(r) => {
                bad_ineq += usize::from(!r.pass);
                bad_ratio += usize::from(!r.ratios_ok);
                worst = worst.max(r.lhs - r.rhs);
            }
            Err(e) => return errored(NAME, e),
        }
    }
    line(
        NAME,
        bad_ineq == 0 && bad_ratio == 0,
        format!(
            "{} pairs at eta {eta:.3e}: {bad_ineq} inequality and {bad_ratio} ratio violations, max lhs - rhs {worst:.3e}",
            opts.smoothness_pairs
        ),
    )
}

fn brute_force_line(env: &Environment, opts: &VerifyOptions) -> CheckLine {
    const NAME: &str = "best response";
    let mdp = env.mdp();
    let layout = mdp.layout().clone();
    let ns = mdp.n_states();
    let pol = Logits::random_normal(layout.clone(), 1.0, &mut stream_rng(opts.seed, 3, 0)).softmax();
    let mut worst = 0.0f64;
    for agent in 0..mdp.n_agents() {
        let radix: Vec<usize> = (0..ns).map(|s| layout.count(agent, s)).collect();
        let total = radix.iter().try_fold(1u64, |acc, &k| acc.checked_mul(k as u64));
        if total.is_none_or(|t| t > opts.brute_force_limit) {
            return skip(NAME, format!("agent {agent} has too many deterministic policies to enumerate"));
        }
        let br = match best_response(mdp, &pol, agent) {
            Ok(b) => b,
            Err(e) => return errored(NAME, e),
        };
        let mut best = vec![f64::NEG_INFINITY; ns];
        let mut choice = vec![0usize; ns];
        loop {
            let det = JointPolicy::deterministic(layout.clone(), |i, s| if i == agent { choice[s] } else { 0 });
            let moved = pol.with_agent_from(agent, &det).expect("same layout");
            match value_functions(mdp, &moved) {
                Ok(v) => best.iter_mut().zip(&v[agent]).for_each(|(b, x)| *b = b.max(*x)),
                Err(e) => return errored(NAME, e),
            }
            if !next_joint(&mut choice, &radix) {
                break;
            }
        }
        for (a, b) in br.values.iter().zip(&best) {
            worst = worst.max((a - b).abs());
        }
    }
    line(NAME, worst <= TOL_BR, format!("max |V_BR - max over deterministic policies| = {worst:.3e}"))
}

/// Runs every check; `eta` sets the smoothness step (default: 0.9 of the bound).
pub fn cmd_verify(env: &Environment, eta: Option<f64>, opts: &VerifyOptions) -> Result<VerifyReport> {
    Ok(VerifyReport {
        label: env.label().to_owned(),
        checks: vec![
            potential_line(env, opts),
            gradient_line(env, opts),
            smoothness_line(env, eta, opts),
            brute_force_line(env, opts),
        ],
    })
}
