//! Finite multi-agent MDPs, product policies and softmax logits.

mod file;
mod layout;
mod mdp;
mod policy;
mod report;

pub use file::{read_environment, write_environment, ENV_FORMAT};
pub use layout::{decode_joint, encode_joint, next_joint, ActionLayout};
pub use mdp::{validate_mdp, MdpTables, MultiAgentMdp, ValidationReport, Violation, SIMPLEX_TOL};
pub use policy::{l1_accuracy, softmax_policy, JointPolicy, Logits};
pub use report::EvalReport;
pub(crate) use policy::softmax_into;

use crate::{Error, Result};

/// A multi-agent MDP bundled with an optional stage potential
/// `phi(s, a)` over `(state, joint action)` rows.
#[derive(Debug, Clone)]
pub struct Environment {
    mdp: MultiAgentMdp,
    stage_potential: Option<Vec<f64>>,
    label: String,
}

impl Environment {
    pub fn new(
        mdp: MultiAgentMdp,
        stage_potential: Option<Vec<f64>>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if let Some(phi) = &stage_potential {
            if phi.len() != mdp.n_rows() {
                return Err(Error::ShapeMismatch(format!(
                    "stage potential has {} entries, MDP has {} (state, joint action) rows",
                    phi.len(),
                    mdp.n_rows()
                )));
            }
            if phi.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams("stage potential must be finite".into()));
            }
        }
        Ok(Self {
            mdp,
            stage_potential,
            label: label.into(),
        })
    }

    /// An environment with no potential attached.
    pub fn plain(mdp: MultiAgentMdp, label: impl Into<String>) -> Self {
        Self {
            mdp,
            stage_potential: None,
            label: label.into(),
        }
    }

    pub fn mdp(&self) -> &MultiAgentMdp {
        &self.mdp
    }

    pub fn stage_potential(&self) -> Option<&[f64]> {
        self.stage_potential.as_deref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same environment over a modified MDP (the potential is kept).
    pub fn with_mdp(&self, mdp: MultiAgentMdp) -> Result<Self> {
        Self::new(mdp, self.stage_potential.clone(), self.label.clone())
    }
}
