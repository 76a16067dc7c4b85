//! Tabular reinforcement learning with Time Hopping and Eligibility
//! Propagation.
//!
//! * [`mdp`]: state/action ids, the Q-table, the environment contract and
//!   value iteration.
//! * [`graph`]: the oriented graph of observed transitions.
//! * [`propagation`]: reverse breadth-first propagation of Q-value updates
//!   over that graph.
//! * [`hopping`]: hopping trigger, target selection and hop.
//! * [`agents`]: Q-learning, Time Hopping and Time Hopping with propagation.
//! * [`env`]: the gated chain MDP and the biped crawler.
//! * [`bench`]: the experiment harness behind the `timehop` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod bench;
pub mod env;
pub mod error;
pub mod graph;
pub mod hopping;
pub mod mdp;
pub mod propagation;

pub use agents::{
    q_update, run_trial, Agent, AgentConfig, Algorithm, CheckpointRow, Evaluation, StepOutcome,
};
pub use error::{Error, Result};
pub use graph::{RecordId, TransitionRecord, TransitionsGraph};
pub use hopping::{hop, select_target, should_hop, HopPolicyConfig, StateStats};
pub use mdp::{value_iteration, Action, EnvModel, Environment, QTable, State};
pub use propagation::{
    propagate, seed_and_propagate, PropagationParams, PropagationStats, Propagator,
};
