//! Seeded repetitions of the dynamics and their artifacts.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use log::info;
use mpg_core::dynamics::{run_with_observer, Algorithm, Guard, Initial, RunStatus};
use mpg_core::rng::stream_rng;
use mpg_core::verify::nash_gap;
use mpg_core::{Environment, Logits};
use rayon::prelude::*;

use crate::artifacts::{
    run_stem, write_summary, OutDir, SnapshotWriter, SummaryRow, TraceRow, TraceWriter, SCHEMA_VERSION,
};
use crate::config::{AlgorithmSpec, ExperimentConfig};

/// Iteration key reserved for initial logits; the dynamics never reach it.
const INIT_KEY: u64 = u64::MAX;

/// Initial logits for run `seed`. With a shared initialization every
/// algorithm starts from the same point.
pub fn initial_logits(env: &Environment, seed: u64, scale: f64, algorithm: Algorithm, shared: bool) -> Logits {
    let stream = if shared {
        0
    } else {
        1 + algorithm as u64
    };
    Logits::random_normal(env.mdp().layout().clone(), scale, &mut stream_rng(seed, INIT_KEY, stream))
}

#[derive(Debug, Clone, Copy)]
pub struct RunOverrides {
    pub guard: Option<Guard>,
    pub threads: Option<usize>,
}

/// One job: run index and algorithm.
#[derive(Debug, Clone, Copy)]
struct Job {
    run_id: usize,
    seed: u64,
    algorithm: Algorithm,
}

fn execute_job(
    env: &Environment,
    cfg: &ExperimentConfig,
    algo: &AlgorithmSpec,
    guard: Option<Guard>,
    out: &OutDir,
    job: Job,
) -> Result<SummaryRow> {
    let stem = run_stem(job.algorithm.name(), job.run_id);
    let mut acfg = algo.algo_config(job.algorithm, job.seed);
    acfg.nash_gap_every = cfg.nash_gap_every;
    if guard.is_some() {
        acfg.guard = guard;
    }
    let init = initial_logits(env, job.seed, cfg.init_scale, job.algorithm, cfg.shared_init);

    let mut trace_w = TraceWriter::create(&out.trace(&stem))?;
    let mut snap_w = SnapshotWriter::create(&out.snapshot(&stem), env.mdp().layout())?;
    let mut failure: Option<anyhow::Error> = None;
    let name = job.algorithm.name();
    let trace = run_with_observer(env, &acfg, Initial::Logits(init), |rec, next| {
        if failure.is_some() {
            return;
        }
        let row = TraceRow {
            run_id: job.run_id,
            algorithm: name.to_owned(),
            iteration: rec.iteration,
            max_policy_step_l1: rec.max_policy_step_l1,
            potential: rec.potential,
            nash_gap: rec.nash_gap,
        };
        let res = trace_w.write(&row).and_then(|_| {
            if cfg.snapshot_every > 0 && rec.iteration % cfg.snapshot_every == 0 {
                snap_w.write(rec.iteration, next)
            } else {
                Ok(())
            }
        });
        if let Err(e) = res {
            failure = Some(e);
        }
    })
    .with_context(|| format!("run {stem}"))?;
    if let Some(e) = failure {
        return Err(e.context(format!("writing artifacts of {stem}")));
    }
    let last = trace.records.last().map(|r| r.iteration).unwrap_or(0);
    if snap_w.last_iteration() != Some(last) {
        snap_w.write(last, &trace.final_policy)?;
    }
    trace_w.finish()?;
    snap_w.finish()?;

    let final_potential = match env.stage_potential() {
        Some(_) => mpg_core::exact::evaluate(env, &trace.final_policy)?.potential_mu,
        None => None,
    };
    let final_nash_gap = if cfg.nash_gap_every > 0 {
        Some(nash_gap(env.mdp(), &trace.final_policy)?.max_gap)
    } else {
        None
    };
    Ok(SummaryRow {
        run_id: job.run_id,
        algorithm: name.to_owned(),
        seed: job.seed,
        converged: trace.status == RunStatus::Converged,
        iterations: trace.iterations(),
        final_potential,
        final_nash_gap,
    })
}

/// Runs every `(seed, algorithm)` pair of the config and writes the traces,
/// snapshots, `summary.csv` and `manifest.toml` under `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, overrides: RunOverrides) -> Result<Vec<SummaryRow>> {
    let algo = cfg
        .algorithm
        .as_ref()
        .ok_or_else(|| anyhow!("the config has no [algorithm] section"))?;
    let env = cfg.environment.build().context("building the environment")?;
    info!(
        "{}: {} agents, {} states, {} joint rows",
        env.label(),
        env.mdp().n_agents(),
        env.mdp().n_states(),
        env.mdp().n_rows()
    );
    let out = OutDir::new(out);
    std::fs::create_dir_all(out.runs()).with_context(|| format!("creating {}", out.runs().display()))?;

    let jobs: Vec<Job> = cfg
        .seeds()
        .enumerate()
        .flat_map(|(run_id, seed)| {
            algo.algorithms.iter().map(move |&algorithm| Job { run_id, seed, algorithm })
        })
        .collect();
    let work = || -> Vec<Result<SummaryRow>> {
        jobs.par_iter()
            .map(|&job| execute_job(&env, cfg, algo, overrides.guard, &out, job))
            .collect()
    };
    let results = match overrides.threads {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build()?.install(work),
        None => work(),
    };
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    write_summary(&out.summary(), &rows)?;
    let algorithms: Vec<&str> = algo.algorithms.iter().map(|a| a.name()).collect();
    std::fs::write(
        out.manifest(),
        format!(
            "schema_version = {SCHEMA_VERSION}\nenvironment = {:?}\nruns = {}\nseed_base = {}\nalgorithms = {:?}\n",
            env.label(),
            cfg.runs,
            cfg.seed_base,
            algorithms
        ),
    )?;
    Ok(rows)
}

/// Median of iterations-to-convergence, counting runs that hit the budget
/// at the budget (a lower bound on their true value).
pub fn median_iterations(rows: &[SummaryRow], algorithm: &str) -> Option<f64> {
    let mut v: Vec<usize> = rows.iter().filter(|r| r.algorithm == algorithm).map(|r| r.iterations).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let m = v.len();
    Some(if m % 2 == 1 {
        v[m / 2] as f64
    } else {
        (v[m / 2 - 1] + v[m / 2]) as f64 / 2.0
    })
}
