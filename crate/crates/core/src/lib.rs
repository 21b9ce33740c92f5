//! Tabular multi-agent MDPs and learning dynamics for Markov potential games.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the finite multi-agent MDP, product policies, softmax
//!   logits and the text serialization of environments.
//! * [`exact`] evaluates a joint policy by solving linear systems: values,
//!   Q-functions, marginal advantages, discounted visitation and the
//!   potential value.
//! * [`sampled`] estimates the same quantities from episodic mini-batches.
//! * [`dynamics`] implements independent natural policy gradient (logit
//!   space), multiplicative weights (policy space) and independent softmax
//!   policy gradient, the step-size guard and the run loop.
//! * [`envs`] builds the stochastic congestion game over a DAG, the
//!   distancing game and one-shot congestion stage games.
//! * [`verify`] contains best responses, Nash gaps, potential checks,
//!   finite-difference gradients and the smoothness inequality.

pub mod dynamics;
pub mod envs;
mod error;
pub mod exact;
pub mod model;
pub mod rng;
pub mod sampled;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    l1_accuracy, validate_mdp, ActionLayout, Environment, EvalReport, JointPolicy, Logits, MdpTables,
    MultiAgentMdp, ValidationReport, Violation,
};
