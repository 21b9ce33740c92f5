//! Experiment configuration files.
//!
//! A config has top-level run settings, an `[environment]` table selected by
//! `type` and an optional `[algorithm]` table:
//!
//! ```toml
//! runs = 10
//! seed_base = 0
//!
//! [environment]
//! type = "scg"
//! dag = "six_vertex.dag"
//! agents = 4
//! gamma = 0.99
//!
//! [algorithm]
//! algorithm = ["inpg", "ipg"]
//! eta = 1e-4
//! mode = "sampled"
//! horizon = 20
//! batch = 20
//! ```
//!
//! Paths are resolved against the directory holding the config.

use std::fmt;
use std::path::{Path, PathBuf};

use mpg_core::dynamics::{AlgoConfig, Algorithm, EvalMode, Guard};
use mpg_core::envs::{
    build_distancing, build_scg_with, build_stage_congestion, parse_dag_spec, CostDescriptor, DagSpec,
    DistancingParams, ScgOptions, SinkMode, Start, StateSpace,
};
use mpg_core::sampled::{Estimator, SampleConfig};
use mpg_core::Environment;
use serde::Deserialize;
use toml::Spanned;

/// Config problem tied to a line of the file (`line` is 0 when unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: {}", self.path.display(), self.line, self.message)
        } else {
            write!(f, "{}: {}", self.path.display(), self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    runs: Option<Spanned<usize>>,
    #[serde(default)]
    seed_base: u64,
    output: Option<PathBuf>,
    #[serde(default)]
    nash_gap_every: usize,
    #[serde(default = "one")]
    snapshot_every: usize,
    #[serde(default = "yes")]
    shared_init: bool,
    #[serde(default = "one_f")]
    init_scale: f64,
    environment: Spanned<RawEnv>,
    algorithm: Option<Spanned<RawAlgo>>,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

/// Union of the fields of every environment type.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    #[serde(rename = "type")]
    kind: Spanned<String>,
    agents: Option<usize>,
    gamma: Option<f64>,
    // scg
    dag: Option<Spanned<PathBuf>>,
    layers: Option<Vec<usize>>,
    cost: Option<Spanned<String>>,
    state_space: Option<Spanned<String>>,
    start: Option<Spanned<String>>,
    /// Reward of the edge from the sink back to the source; episodes end at the sink when absent.
    return_reward: Option<f64>,
    state_budget: Option<u64>,
    // distancing
    weights: Option<Vec<f64>>,
    penalty: Option<f64>,
    spread_trigger: Option<usize>,
    return_trigger: Option<usize>,
    mu_safe: Option<f64>,
    // stage
    costs: Option<Vec<Spanned<String>>>,
    // file
    path: Option<Spanned<PathBuf>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Algorithm),
    Many(Vec<Algorithm>),
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Exact,
    Sampled,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgo {
    #[serde(alias = "algorithms")]
    algorithm: Spanned<OneOrMany>,
    eta: f64,
    #[serde(default = "sampled")]
    mode: ModeKind,
    #[serde(default = "twenty")]
    horizon: usize,
    #[serde(default = "twenty")]
    batch: usize,
    #[serde(default)]
    estimator: Estimator,
    #[serde(default = "default_max_iters")]
    max_iters: usize,
    #[serde(default = "default_threshold")]
    convergence_threshold: f64,
    guard: Option<Guard>,
    mismatch: Option<f64>,
}

fn sampled() -> ModeKind {
    ModeKind::Sampled
}
fn twenty() -> usize {
    20
}
fn default_max_iters() -> usize {
    3000
}
fn default_threshold() -> f64 {
    1e-15
}

/// How to build the environment.
#[derive(Debug, Clone)]
pub enum EnvSpec {
    Scg { dag: DagSpec, options: ScgOptions },
    Distancing(DistancingParams),
    Stage { agents: usize, costs: Vec<CostDescriptor>, gamma: f64 },
    File(PathBuf),
}

impl EnvSpec {
    pub fn build(&self) -> mpg_core::Result<Environment> {
        match self {
            Self::Scg { dag, options } => Ok(build_scg_with(dag, options)?.env),
            Self::Distancing(p) => build_distancing(p),
            Self::Stage { agents, costs, gamma } => build_stage_congestion(*agents, costs, *gamma),
            Self::File(path) => Environment::load(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub algorithms: Vec<Algorithm>,
    pub eta: f64,
    pub mode: ModeKind,
    pub horizon: usize,
    pub batch: usize,
    pub estimator: Estimator,
    pub max_iters: usize,
    pub convergence_threshold: f64,
    pub guard: Option<Guard>,
    pub mismatch: Option<f64>,
}

impl AlgorithmSpec {
    /// Dynamics settings for one run; `seed` drives the episode sampler.
    pub fn algo_config(&self, algorithm: Algorithm, seed: u64) -> AlgoConfig {
        let eval_mode = match self.mode {
            ModeKind::Exact => EvalMode::Exact,
            ModeKind::Sampled => EvalMode::Sampled(SampleConfig {
                estimator: self.estimator,
                ..SampleConfig::new(self.horizon, self.batch, seed)
            }),
        };
        AlgoConfig {
            max_iters: self.max_iters,
            convergence_threshold: self.convergence_threshold,
            guard: self.guard,
            mismatch_override: self.mismatch,
            ..AlgoConfig::new(algorithm, self.eta, eval_mode)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub seed_base: u64,
    pub output: Option<PathBuf>,
    pub nash_gap_every: usize,
    /// Policy snapshot cadence; 0 keeps only the final policy.
    pub snapshot_every: usize,
    /// Same initial logits for every algorithm at a given run index.
    pub shared_init: bool,
    /// Standard deviation of the initial logits.
    pub init_scale: f64,
    pub environment: EnvSpec,
    pub algorithm: Option<AlgorithmSpec>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_owned(),
            line: 0,
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|mut e| {
            e.path = path.to_owned();
            e
        })
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let err = |offset: usize, message: String| ConfigError {
            path: PathBuf::from("<config>"),
            line: line_of(text, offset),
            message,
        };
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let offset = e.span().map(|s| s.start).unwrap_or(0);
            err(offset, e.message().to_owned())
        })?;
        let runs = match raw.runs {
            Some(r) if *r.get_ref() == 0 => return Err(err(r.span().start, "runs must be at least 1".into())),
            Some(r) => r.into_inner(),
            None => 1,
        };
        if !(raw.init_scale >= 0.0 && raw.init_scale.is_finite()) {
            return Err(err(0, format!("init_scale must be non-negative, got {}", raw.init_scale)));
        }
        let env_start = raw.environment.span().start;
        let environment = resolve_env(raw.environment.into_inner(), base).map_err(|(o, m)| err(o.unwrap_or(env_start), m))?;
        let algorithm = match raw.algorithm {
            None => None,
            Some(a) => {
                let start = a.span().start;
                let a = a.into_inner();
                let algo_span = a.algorithm.span().start;
                let algorithms = match a.algorithm.into_inner() {
                    OneOrMany::One(x) => vec![x],
                    OneOrMany::Many(v) => v,
                };
                if algorithms.is_empty() {
                    return Err(err(algo_span, "at least one algorithm is required".into()));
                }
                let spec = AlgorithmSpec {
                    algorithms,
                    eta: a.eta,
                    mode: a.mode,
                    horizon: a.horizon,
                    batch: a.batch,
                    estimator: a.estimator,
                    max_iters: a.max_iters,
                    convergence_threshold: a.convergence_threshold,
                    guard: a.guard,
                    mismatch: a.mismatch,
                };
                spec.algo_config(spec.algorithms[0], 0)
                    .validate()
                    .map_err(|e| err(start, e.to_string()))?;
                Some(spec)
            }
        };
        Ok(Self {
            runs,
            seed_base: raw.seed_base,
            output: raw.output.map(|p| base.join(p)),
            nash_gap_every: raw.nash_gap_every,
            snapshot_every: raw.snapshot_every,
            shared_init: raw.shared_init,
            init_scale: raw.init_scale,
            environment,
            algorithm,
        })
    }

    /// Seeds of the configured runs.
    pub fn seeds(&self) -> std::ops::Range<u64> {
        self.seed_base..self.seed_base + self.runs as u64
    }
}

type EnvResult<T> = Result<T, (Option<usize>, String)>;

fn existing(base: &Path, p: Spanned<PathBuf>) -> EnvResult<PathBuf> {
    let at = p.span().start;
    let full = base.join(p.into_inner());
    if !full.is_file() {
        return Err((Some(at), format!("file `{}` does not exist", full.display())));
    }
    Ok(full)
}

fn cost(s: Spanned<String>) -> EnvResult<CostDescriptor> {
    let at = s.span().start;
    s.get_ref().parse().map_err(|e: mpg_core::Error| (Some(at), format!("bad cost `{}`: {e}", s.get_ref())))
}

fn resolve_env(raw: RawEnv, base: &Path) -> EnvResult<EnvSpec> {
    let kind_at = raw.kind.span().start;
    Ok(match raw.kind.get_ref().as_str() {
        "scg" => {
            let spec = match raw.dag {
                Some(p) => {
                    let at = p.span().start;
                    let path = existing(base, p)?;
                    let text = std::fs::read_to_string(&path).map_err(|e| (Some(at), e.to_string()))?;
                    parse_dag_spec(&text).map_err(|e| (Some(at), format!("{}: {e}", path.display())))?
                }
                None => {
                    let c = match raw.cost {
                        Some(c) => cost(c)?,
                        None => CostDescriptor::InverseLoad { base: 1.0 },
                    };
                    DagSpec::layered(raw.layers.as_deref().unwrap_or(&[2, 2]), c)
                }
            };
            let n = raw
                .agents
                .or(spec.agents)
                .ok_or((Some(kind_at), "scg needs `agents` here or in the DAG file".to_string()))?;
            let mut options = ScgOptions::new(n, raw.gamma.unwrap_or(0.99));
            if let Some(s) = raw.state_space {
                options.state_space = match s.get_ref().as_str() {
                    "full" => StateSpace::Full,
                    "reachable" => StateSpace::Reachable,
                    other => return Err((Some(s.span().start), format!("unknown state_space `{other}`"))),
                };
            }
            if let Some(s) = raw.start {
                options.start = match s.get_ref().as_str() {
                    "source" => Start::Source,
                    "uniform" => Start::Uniform,
                    other => return Err((Some(s.span().start), format!("unknown start `{other}`"))),
                };
            }
            if let Some(r) = raw.return_reward {
                options.sink = SinkMode::ReturnEdge(r);
            }
            if let Some(b) = raw.state_budget {
                options.state_budget = b;
            }
            EnvSpec::Scg { dag: spec, options }
        }
        "distancing" => {
            let d = DistancingParams::default();
            EnvSpec::Distancing(DistancingParams {
                n_agents: raw.agents.unwrap_or(d.n_agents),
                weights: raw.weights.unwrap_or(d.weights),
                penalty: raw.penalty.unwrap_or(d.penalty),
                spread_trigger: raw.spread_trigger.unwrap_or(d.spread_trigger),
                return_trigger: raw.return_trigger.unwrap_or(d.return_trigger),
                gamma: raw.gamma.unwrap_or(d.gamma),
                mu_safe: raw.mu_safe.unwrap_or(d.mu_safe),
            })
        }
        "stage" => EnvSpec::Stage {
            agents: raw.agents.ok_or((Some(kind_at), "stage needs `agents`".to_string()))?,
            costs: raw
                .costs
                .ok_or((Some(kind_at), "stage needs `costs`".to_string()))?
                .into_iter()
                .map(cost)
                .collect::<EnvResult<_>>()?,
            gamma: raw.gamma.unwrap_or(0.0),
        },
        "file" => EnvSpec::File(existing(
            base,
            raw.path.ok_or((Some(kind_at), "file needs `path`".to_string()))?,
        )?),
        other => {
            return Err((
                Some(kind_at),
                format!("unknown environment type `{other}` (expected scg, distancing, stage or file)"),
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, Path::new("."))
    }

    #[test]
    fn defaults_follow_the_experiment_protocol() {
        let cfg = parse(
            "[environment]\ntype = \"scg\"\nagents = 2\n\n[algorithm]\nalgorithm = \"inpg\"\neta = 1e-4\n",
        )
        .unwrap();
        assert_eq!(cfg.runs, 1);
        let a = cfg.algorithm.unwrap();
        assert_eq!((a.horizon, a.batch, a.max_iters), (20, 20, 3000));
        assert_eq!(a.convergence_threshold, 1e-15);
        assert_eq!(a.mode, ModeKind::Sampled);
        match cfg.environment {
            EnvSpec::Scg { options, .. } => assert_eq!(options.gamma, 0.99),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn several_algorithms() {
        let cfg = parse("[environment]\ntype = \"distancing\"\n[algorithm]\nalgorithms = [\"inpg\", \"ipg\"]\neta = 0.1\n").unwrap();
        assert_eq!(cfg.algorithm.unwrap().algorithms, vec![Algorithm::Inpg, Algorithm::Ipg]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("runs = 0\n[environment]\ntype = \"distancing\"\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse("runs = 2\n\n[environment]\ntype = \"scg\"\nagents = 2\nstart = \"middle\"\n").unwrap_err();
        assert_eq!(e.line, 6, "{e}");
        let e = parse("[environment]\ntype = \"file\"\npath = \"missing.env\"\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("does not exist"));
        let e = parse("[environment]\ntype = \"stage\"\nagents = 2\ncosts = [\"inverse_load(1)\", \"cubic(2)\"]\n").unwrap_err();
        assert_eq!(e.line, 4);
        let e = parse("[environment]\ntype = \"distancing\"\n[algorithm]\nalgorithm = \"inpg\"\neta = -1.0\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse("[environment]\ntype = \"distancing\"\nbogus = 3\n").unwrap_err();
        assert!(e.line >= 1 && e.line <= 3, "{e}");
    }

    #[test]
    fn stage_costs_parse() {
        let cfg = parse("[environment]\ntype = \"stage\"\nagents = 2\ncosts = [\"inverse_load(1)\", \"linear(0.9, 0.2)\"]\n").unwrap();
        let env = cfg.environment.build().unwrap();
        assert_eq!(env.mdp().n_states(), 1);
    }
}
