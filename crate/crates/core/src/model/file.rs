//! Text serialization of environments.
//!
//! The document is TOML with these sections (all keys required unless noted):
//!
//! ```toml
//! format = "mpg-env/1"
//! label = "free text"
//!
//! [states]
//! count = 3
//!
//! [agents]
//! count = 2
//! actions = [[2, 2], [1, 1], [1, 1]]        # [state][agent] action counts
//!
//! [rewards]
//! values = [[[...], ...], ...]              # [agent][state][joint action]
//!
//! [transitions]
//! next = [[[1], [2]], ...]                  # [state][joint action][k] successor
//! prob = [[[1.0], [1.0]], ...]              # matching probabilities
//!
//! [gamma]
//! value = 0.99
//!
//! [mu]
//! values = [1.0, 0.0, 0.0]
//!
//! [potential]                               # optional stage potential
//! values = [[...], ...]                     # [state][joint action]
//! ```
//!
//! Joint actions are numbered in mixed radix with agent 0 varying fastest.
//! Floats are written in the shortest form that parses back to the same
//! `f64`, so writing a document that was read from this writer reproduces it
//! byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Environment, MdpTables, MultiAgentMdp};
use crate::{Error, Result};

pub const ENV_FORMAT: &str = "mpg-env/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    format: String,
    label: String,
    states: States,
    agents: Agents,
    rewards: Rewards,
    transitions: Transitions,
    gamma: Gamma,
    mu: Mu,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    potential: Option<Potential>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct States {
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Agents {
    count: usize,
    actions: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Rewards {
    values: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Transitions {
    next: Vec<Vec<Vec<usize>>>,
    prob: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Gamma {
    value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Mu {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Potential {
    values: Vec<Vec<f64>>,
}

/// Renders an environment as a document in the `mpg-env/1` format.
pub fn write_environment(env: &Environment) -> Result<String> {
    let mdp = env.mdp();
    let t = mdp.to_tables();
    let next = t
        .transitions
        .iter()
        .map(|rows| rows.iter().map(|r| r.iter().map(|&(n, _)| n).collect()).collect())
        .collect();
    let prob = t
        .transitions
        .iter()
        .map(|rows| rows.iter().map(|r| r.iter().map(|&(_, p)| p).collect()).collect())
        .collect();
    let potential = env.stage_potential().map(|phi| Potential {
        values: (0..mdp.n_states())
            .map(|s| phi[mdp.joint_range(s)].to_vec())
            .collect(),
    });
    let doc = EnvFile {
        format: ENV_FORMAT.to_string(),
        label: env.label().to_string(),
        states: States {
            count: mdp.n_states(),
        },
        agents: Agents {
            count: t.n_agents,
            actions: t.action_counts,
        },
        rewards: Rewards { values: t.rewards },
        transitions: Transitions { next, prob },
        gamma: Gamma { value: t.gamma },
        mu: Mu { values: t.mu },
        potential,
    };
    toml::to_string(&doc).map_err(|e| Error::Format(e.to_string()))
}

/// Parses and validates a document in the `mpg-env/1` format.
pub fn read_environment(text: &str) -> Result<Environment> {
    let doc: EnvFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if doc.format != ENV_FORMAT {
        return Err(Error::Format(format!(
            "unsupported format `{}`, expected `{ENV_FORMAT}`",
            doc.format
        )));
    }
    if doc.agents.actions.len() != doc.states.count {
        return Err(Error::Format(format!(
            "[agents] actions lists {} states, [states] count is {}",
            doc.agents.actions.len(),
            doc.states.count
        )));
    }
    if doc.transitions.next.len() != doc.transitions.prob.len() {
        return Err(Error::Format("[transitions] next and prob differ in length".into()));
    }
    let mut transitions = Vec::with_capacity(doc.transitions.next.len());
    for (s, (nexts, probs)) in doc.transitions.next.into_iter().zip(doc.transitions.prob).enumerate() {
        if nexts.len() != probs.len() {
            return Err(Error::Format(format!("[transitions] state {s}: next and prob differ in length")));
        }
        let mut rows = Vec::with_capacity(nexts.len());
        for (a, (n, p)) in nexts.into_iter().zip(probs).enumerate() {
            if n.len() != p.len() {
                return Err(Error::Format(format!(
                    "[transitions] state {s}, joint action {a}: next and prob differ in length"
                )));
            }
            rows.push(n.into_iter().zip(p).collect());
        }
        transitions.push(rows);
    }
    let mdp = MultiAgentMdp::new(MdpTables {
        n_agents: doc.agents.count,
        action_counts: doc.agents.actions,
        rewards: doc.rewards.values,
        transitions,
        gamma: doc.gamma.value,
        mu: doc.mu.values,
    })?;
    let potential = match doc.potential {
        Some(p) => {
            if p.values.len() != mdp.n_states() {
                return Err(Error::Format(format!(
                    "[potential] lists {} states, expected {}",
                    p.values.len(),
                    mdp.n_states()
                )));
            }
            for (s, row) in p.values.iter().enumerate() {
                if row.len() != mdp.joint_range(s).len() {
                    return Err(Error::Format(format!(
                        "[potential] state {s} has {} entries, expected {}",
                        row.len(),
                        mdp.joint_range(s).len()
                    )));
                }
            }
            Some(p.values.concat())
        }
        None => None,
    };
    Environment::new(mdp, potential, doc.label)
}

impl Environment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        read_environment(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, write_environment(self)?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
