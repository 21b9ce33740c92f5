use std::collections::HashMap;

use super::dag::DagSpec;
use crate::model::{decode_joint, Environment, MdpTables, MultiAgentMdp};
use crate::{Error, Result};

/// Which configurations become MDP states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    /// Every tuple of vertex positions (`|V|^n`), plus the terminal state when used.
    Full,
    /// Only configurations reachable from the support of the start distribution.
    Reachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    /// All agents at the source.
    Source,
    /// Uniform over every state of the chosen state space.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SinkMode {
    /// Agents at the sink idle with reward 0; once all agents are there the
    /// chain moves to an absorbing zero-reward terminal state.
    Terminate,
    /// Agents at the sink take a single edge back to the source paying this
    /// load-independent reward.
    ReturnEdge(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgOptions {
    pub n_agents: usize,
    pub gamma: f64,
    pub state_space: StateSpace,
    pub start: Start,
    pub sink: SinkMode,
    /// Maximum number of MDP states the builder may create.
    pub state_budget: u64,
}

impl ScgOptions {
    pub fn new(n_agents: usize, gamma: f64) -> Self {
        Self {
            n_agents,
            gamma,
            state_space: StateSpace::Full,
            start: Start::Source,
            sink: SinkMode::Terminate,
            state_budget: 1 << 20,
        }
    }
}

/// A built congestion game together with the configuration of every state.
#[derive(Debug, Clone)]
pub struct Scg {
    pub env: Environment,
    /// Vertex of each agent per state; `None` for the terminal state.
    pub configurations: Vec<Option<Vec<usize>>>,
    /// Edge index behind action `a` of an agent at vertex `v`; empty at the sink.
    pub actions_at: Vec<Vec<usize>>,
}

impl Scg {
    pub fn state_of(&self, config: &[usize]) -> Option<usize> {
        self.configurations
            .iter()
            .position(|c| c.as_deref() == Some(config))
    }
}

/// Stochastic congestion game with default options (full state space, all
/// agents start at the source, episodes terminate at the sink).
pub fn build_scg(spec: &DagSpec, n_agents: usize, gamma: f64) -> Result<Environment> {
    Ok(build_scg_with(spec, &ScgOptions::new(n_agents, gamma))?.env)
}

pub fn build_scg_with(spec: &DagSpec, opts: &ScgOptions) -> Result<Scg> {
    spec.validate()?;
    let n = opts.n_agents;
    if n == 0 {
        return Err(Error::InvalidParams("at least one agent is required".into()));
    }
    if !(0.0..1.0).contains(&opts.gamma) {
        return Err(Error::InvalidParams(format!("gamma must lie in [0, 1), got {}", opts.gamma)));
    }
    for (e, edge) in spec.edges.iter().enumerate() {
        edge.cost.check_range(e, n)?;
    }
    if let SinkMode::ReturnEdge(r) = opts.sink {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::CostOutOfRange {
                edge: spec.edges.len(),
                load: 1,
                value: r,
            });
        }
    }
    let nv = spec.vertices.len();
    let actions_at: Vec<Vec<usize>> = (0..nv)
        .map(|v| if v == spec.sink { Vec::new() } else { spec.out_edges(v) })
        .collect();
    let terminate = matches!(opts.sink, SinkMode::Terminate);

    let configurations = match opts.state_space {
        StateSpace::Full => {
            let needed = (nv as u128).pow(n as u32) + terminate as u128;
            if needed > opts.state_budget as u128 {
                return Err(Error::StateBudget {
                    needed,
                    budget: opts.state_budget,
                });
            }
            let mut out: Vec<Option<Vec<usize>>> = Vec::with_capacity(needed as usize);
            let mut digits = vec![0usize; n];
            let radix = vec![nv; n];
            loop {
                out.push(Some(digits.clone()));
                if !crate::model::next_joint(&mut digits, &radix) {
                    break;
                }
            }
            if terminate {
                out.push(None);
            }
            out
        }
        StateSpace::Reachable => reachable_configs(spec, opts, &actions_at)?,
    };

    let index: HashMap<Option<Vec<usize>>, usize> = configurations
        .iter()
        .cloned()
        .enumerate()
        .map(|(k, c)| (c, k))
        .collect();
    let terminal = index.get(&None).copied();

    let ns = configurations.len();
    let mut action_counts = Vec::with_capacity(ns);
    let mut rewards = vec![Vec::with_capacity(ns); n];
    let mut transitions = Vec::with_capacity(ns);
    let mut potential = Vec::new();
    let mut digits = vec![0usize; n];
    let mut load = vec![0usize; spec.edges.len()];
    let mut next = vec![0usize; n];

    for config in &configurations {
        let Some(pos) = config else {
            action_counts.push(vec![1; n]);
            for r in rewards.iter_mut() {
                r.push(vec![0.0]);
            }
            transitions.push(vec![vec![(terminal.unwrap(), 1.0)]]);
            potential.push(0.0);
            continue;
        };
        let counts: Vec<usize> = pos.iter().map(|&v| actions_at[v].len().max(1)).collect();
        let joint: usize = counts.iter().product();
        let mut r_state = vec![Vec::with_capacity(joint); n];
        let mut t_state = Vec::with_capacity(joint);
        for a in 0..joint {
            decode_joint(a, &counts, &mut digits);
            load.iter_mut().for_each(|l| *l = 0);
            let mut at_sink = 0usize;
            for i in 0..n {
                if pos[i] == spec.sink {
                    at_sink += 1;
                } else {
                    load[actions_at[pos[i]][digits[i]]] += 1;
                }
            }
            for i in 0..n {
                let r = if pos[i] == spec.sink {
                    match opts.sink {
                        SinkMode::Terminate => 0.0,
                        SinkMode::ReturnEdge(r) => r,
                    }
                } else {
                    let e = actions_at[pos[i]][digits[i]];
                    spec.edges[e].cost.eval(load[e])
                };
                r_state[i].push(r);
                next[i] = if pos[i] == spec.sink {
                    if terminate {
                        spec.sink
                    } else {
                        spec.source
                    }
                } else {
                    spec.edges[actions_at[pos[i]][digits[i]]].to
                };
            }
            let mut phi: f64 = load
                .iter()
                .enumerate()
                .map(|(e, &l)| spec.edges[e].cost.rosenthal(l))
                .sum();
            if let SinkMode::ReturnEdge(r) = opts.sink {
                phi += r * at_sink as f64;
            }
            potential.push(phi);
            let target = if terminate && at_sink == n {
                None
            } else {
                Some(next.clone())
            };
            let t = *index.get(&target).ok_or_else(|| {
                Error::InvalidParams("successor configuration missing from the state space".into())
            })?;
            t_state.push(vec![(t, 1.0)]);
        }
        action_counts.push(counts);
        for (i, r) in r_state.into_iter().enumerate() {
            rewards[i].push(r);
        }
        transitions.push(t_state);
    }

    let mu = match opts.start {
        Start::Uniform => vec![1.0 / ns as f64; ns],
        Start::Source => {
            let mut mu = vec![0.0; ns];
            mu[index[&Some(vec![spec.source; n])]] = 1.0;
            mu
        }
    };
    let mdp = MultiAgentMdp::new(MdpTables {
        n_agents: n,
        action_counts,
        rewards,
        transitions,
        gamma: opts.gamma,
        mu,
    })?;
    let label = format!("scg-{}v-{}a", nv, n);
    Ok(Scg {
        env: Environment::new(mdp, Some(potential), label)?,
        configurations,
        actions_at,
    })
}

fn reachable_configs(
    spec: &DagSpec,
    opts: &ScgOptions,
    actions_at: &[Vec<usize>],
) -> Result<Vec<Option<Vec<usize>>>> {
    let n = opts.n_agents;
    let nv = spec.vertices.len();
    let terminate = matches!(opts.sink, SinkMode::Terminate);
    let seeds: Vec<Vec<usize>> = match opts.start {
        Start::Source => vec![vec![spec.source; n]],
        Start::Uniform => {
            return Err(Error::InvalidParams(
                "a uniform start needs the full state space".into(),
            ))
        }
    };
    // Agents move independently, so the reachable set is the product of
    // per-agent successor sets, explored breadth-first.
    let succ: Vec<Vec<usize>> = (0..nv)
        .map(|v| {
            if v == spec.sink {
                vec![if terminate { spec.sink } else { spec.source }]
            } else {
                let mut s: Vec<usize> = actions_at[v].iter().map(|&e| spec.edges[e].to).collect();
                s.sort_unstable();
                s.dedup();
                s
            }
        })
        .collect();
    let mut seen: HashMap<Vec<usize>, ()> = HashMap::new();
    let mut order: Vec<Vec<usize>> = Vec::new();
    let mut head = 0;
    let mut has_terminal = false;
    for s in seeds {
        seen.insert(s.clone(), ());
        order.push(s);
    }
    while head < order.len() {
        let cur = order[head].clone();
        head += 1;
        if terminate && cur.iter().all(|&v| v == spec.sink) {
            has_terminal = true;
            continue;
        }
        let radix: Vec<usize> = cur.iter().map(|&v| succ[v].len()).collect();
        let mut digits = vec![0usize; n];
        loop {
            let cand: Vec<usize> = (0..n).map(|i| succ[cur[i]][digits[i]]).collect();
            if !seen.contains_key(&cand) {
                if order.len() as u64 + 1 > opts.state_budget {
                    return Err(Error::StateBudget {
                        needed: order.len() as u128 + 1,
                        budget: opts.state_budget,
                    });
                }
                seen.insert(cand.clone(), ());
                order.push(cand);
            }
            if !crate::model::next_joint(&mut digits, &radix) {
                break;
            }
        }
    }
    let mut out: Vec<Option<Vec<usize>>> = order.into_iter().map(Some).collect();
    if has_terminal {
        out.push(None);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::dag::{parse_dag_spec, CostDescriptor};
    use crate::exact::{potential_value, value_functions};
    use crate::model::JointPolicy;

    fn single_edge() -> DagSpec {
        parse_dag_spec("source=s\nsink=t\ns -> t cost=table(1, 0.5)\n").unwrap()
    }

    #[test]
    fn one_agent_single_edge() {
        let scg = build_scg_with(&single_edge(), &ScgOptions::new(1, 0.99)).unwrap();
        assert_eq!(scg.configurations, vec![Some(vec![0]), Some(vec![1]), None]);
        let mdp = scg.env.mdp();
        assert_eq!(mdp.a_max(), 1);
        let pol = JointPolicy::uniform(mdp.layout().clone());
        let v = value_functions(mdp, &pol).unwrap();
        assert!((v[0][0] - 1.0).abs() < 1e-12);
        let (phi, at_mu) = potential_value(&scg.env, &pol).unwrap();
        assert!((phi[0] - 1.0).abs() < 1e-12);
        assert!((at_mu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layered_graph_shape() {
        let spec = DagSpec::layered(&[2, 2], CostDescriptor::InverseLoad { base: 1.0 });
        let scg = build_scg_with(&spec, &ScgOptions::new(4, 0.99)).unwrap();
        let mdp = scg.env.mdp();
        assert_eq!(mdp.n_states(), 6usize.pow(4) + 1);
        for (s, c) in scg.configurations.iter().enumerate() {
            if let Some(c) = c {
                for i in 0..4 {
                    let expect = spec.out_edges(c[i]).len().max(1);
                    assert_eq!(mdp.layout().count(i, s), expect);
                }
            }
        }
        let reach = build_scg_with(
            &spec,
            &ScgOptions {
                state_space: StateSpace::Reachable,
                ..ScgOptions::new(4, 0.99)
            },
        )
        .unwrap();
        // start, 2^4 first layer, 2^4 second layer, all at sink, terminal
        assert_eq!(reach.env.mdp().n_states(), 1 + 16 + 16 + 1 + 1);
    }

    #[test]
    fn state_budget_is_enforced() {
        let spec = DagSpec::layered(&[2, 2], CostDescriptor::InverseLoad { base: 1.0 });
        let opts = ScgOptions {
            state_budget: 1000,
            ..ScgOptions::new(4, 0.99)
        };
        assert!(matches!(
            build_scg_with(&spec, &opts),
            Err(Error::StateBudget { needed: 1297, budget: 1000 })
        ));
    }

    #[test]
    fn out_of_range_cost_is_rejected() {
        let spec = parse_dag_spec("source=s\nsink=t\ns -> t cost=linear(1, 0.6)\n").unwrap();
        assert!(matches!(build_scg(&spec, 3, 0.9), Err(Error::CostOutOfRange { load: 3, .. })));
    }

    #[test]
    fn return_edge_has_no_terminal() {
        let scg = build_scg_with(
            &single_edge(),
            &ScgOptions {
                sink: SinkMode::ReturnEdge(0.25),
                ..ScgOptions::new(2, 0.9)
            },
        )
        .unwrap();
        assert!(scg.configurations.iter().all(|c| c.is_some()));
        let mdp = scg.env.mdp();
        let s = scg.state_of(&[1, 1]).unwrap();
        assert_eq!(mdp.reward(0, s, 0), 0.25);
        assert_eq!(mdp.transition_row(mdp.joint_range(s).start).0, &[scg.state_of(&[0, 0]).unwrap()]);
    }

    #[test]
    fn two_parallel_edges_deviation_identity_at_zero_discount() {
        let spec = parse_dag_spec("source=s\nsink=t\ns -> t\ns -> t\n").unwrap();
        let scg = build_scg_with(&spec, &ScgOptions::new(2, 0.0)).unwrap();
        let env = &scg.env;
        let mdp = env.mdp();
        let start = scg.state_of(&[0, 0]).unwrap();
        let phi = env.stage_potential().unwrap();
        let row = |a0: usize, a1: usize| mdp.joint_range(start).start + a0 + 2 * a1;
        for a0 in 0..2 {
            for a1 in 0..2 {
                for dev in 0..2 {
                    let d_phi = phi[row(dev, a1)] - phi[row(a0, a1)];
                    let d_r = mdp.reward(0, start, dev + 2 * a1) - mdp.reward(0, start, a0 + 2 * a1);
                    assert!((d_phi - d_r).abs() < 1e-15);
                    let d_phi = phi[row(a0, dev)] - phi[row(a0, a1)];
                    let d_r = mdp.reward(1, start, a0 + 2 * dev) - mdp.reward(1, start, a0 + 2 * a1);
                    assert!((d_phi - d_r).abs() < 1e-15);
                }
            }
        }
    }
}
