//! The three Time Hopping components: the trigger deciding when to hop, the
//! target selector deciding where to, and the hop itself.
//!
//! The trigger and the selector are reconstructions. The trigger prunes the
//! current branch when its discounted value prediction `gamma * max_q(s)` falls
//! below a fraction of the best value known anywhere. The selector samples a
//! previously visited state from a softmax over an exploration score that
//! favours states with untried actions and few visits.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{Action, Environment, QTable, State};

/// Recorded in benchmark metadata so results are not mistaken for the
/// original component internals.
pub const HOP_IMPL: &str = "reconstructed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopPolicyConfig {
    /// Fraction of the best known value below which a branch is pruned, in
    /// `[0, 1]`. Zero never prunes while values are non-negative.
    pub prune_threshold: f64,
    /// Softmax temperature of target selection, `> 0`.
    pub target_temperature: f64,
}

impl Default for HopPolicyConfig {
    fn default() -> Self {
        Self {
            prune_threshold: 0.5,
            target_temperature: 1.0,
        }
    }
}

impl HopPolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prune_threshold) {
            return Err(Error::config(
                "hop.prune_threshold",
                format!("{} is not in [0, 1]", self.prune_threshold),
            ));
        }
        if !(self.target_temperature > 0.0) {
            return Err(Error::config(
                "hop.target_temperature",
                format!("{} must be positive", self.target_temperature),
            ));
        }
        Ok(())
    }
}

/// Visit bookkeeping over the states the agent has been in.
#[derive(Debug, Clone)]
pub struct StateStats {
    action_count: usize,
    visits: Vec<u32>,
    untried: Vec<u32>,
    tried: Vec<bool>,
    visited: Vec<State>,
}

impl StateStats {
    pub fn new(state_count: usize, action_count: usize) -> Self {
        Self {
            action_count,
            visits: vec![0; state_count],
            untried: vec![action_count as u32; state_count],
            tried: vec![false; state_count * action_count],
            visited: Vec::new(),
        }
    }

    pub fn visit(&mut self, s: State) {
        if self.visits[s.0] == 0 {
            self.visited.push(s);
        }
        self.visits[s.0] += 1;
    }

    pub fn mark_tried(&mut self, s: State, a: Action) {
        let slot = &mut self.tried[s.0 * self.action_count + a.0];
        if !*slot {
            *slot = true;
            self.untried[s.0] -= 1;
        }
    }

    pub fn is_visited(&self, s: State) -> bool {
        self.visits.get(s.0).is_some_and(|&v| v > 0)
    }

    pub fn visit_count(&self, s: State) -> u32 {
        self.visits[s.0]
    }

    pub fn untried_action_count(&self, s: State) -> u32 {
        self.untried[s.0]
    }

    /// Visited states in order of first visit.
    pub fn visited(&self) -> &[State] {
        &self.visited
    }

    /// Best `max_q` over visited states; 0 before any visit.
    pub fn global_best(&self, q: &QTable) -> f64 {
        self.visited
            .iter()
            .map(|&s| q.max_q(s))
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    /// Exploration score used by target selection.
    pub fn score(&self, s: State) -> f64 {
        self.untried[s.0] as f64 + 1.0 / (1.0 + self.visits[s.0] as f64)
    }
}

/// Hopping trigger: true when `gamma * max_q(s)` is below `prune_threshold`
/// times the best value among visited states.
pub fn should_hop(
    q: &QTable,
    stats: &StateStats,
    s: State,
    gamma: f64,
    cfg: &HopPolicyConfig,
) -> bool {
    gamma * q.max_q(s) < cfg.prune_threshold * stats.global_best(q)
}

/// Target selection: samples a visited state with probability proportional
/// to `exp(score / target_temperature)`.
pub fn select_target<R: Rng + ?Sized>(
    stats: &StateStats,
    cfg: &HopPolicyConfig,
    rng: &mut R,
) -> Result<State> {
    let visited = stats.visited();
    if visited.is_empty() {
        return Err(Error::Precondition(
            "target selection needs at least one visited state".into(),
        ));
    }
    let temperature = cfg.target_temperature;
    let top = visited
        .iter()
        .map(|&s| stats.score(s))
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = visited
        .iter()
        .map(|&s| ((stats.score(s) - top) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    for (&s, w) in visited.iter().zip(&weights) {
        if pick < *w {
            return Ok(s);
        }
        pick -= w;
    }
    Ok(*visited.last().expect("non-empty"))
}

/// Moves the environment to a previously visited `target`. Learning data is
/// untouched.
pub fn hop<E: Environment + ?Sized>(env: &mut E, stats: &StateStats, target: State) -> Result<()> {
    if !stats.is_visited(target) {
        return Err(Error::Precondition(format!(
            "hop target {target} has never been visited"
        )));
    }
    env.set_state(target)
}
